#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "umt/error.hpp"
#include "umt/nn.hpp"
#include "umt/tensor.hpp"

namespace umt {

struct EncoderConfig {
    std::size_t vocab_size = 2;
    std::size_t emb_dim = 200;
    std::size_t hidden = 200;
    std::size_t conv_width = 3;
    std::size_t max_len = 100;
    bool truncate = false;  // overlength input is an error unless this is set
};

struct EncoderOutput {
    Tensor states;       // [n x h], BiLSTM halves projected to h
    Tensor scratchpad0;  // [n x h], tanh(conv(states))
    Tensor final_state;  // [1 x h], last row of states
};

// Per-direction LSTM outputs, both in sentence order.
struct BiLstmOutput {
    Tensor forward;   // [n x h]
    Tensor backward;  // [n x h]
};

struct FittedIds {
    std::vector<std::size_t> ids;
    bool truncated = false;
};

// Applies the max_len policy: either truncates and says so, or refuses.
inline FittedIds fit_length(std::span<const std::size_t> ids, const EncoderConfig& cfg) {
    if (ids.empty()) throw data_error("cannot encode an empty sentence");
    if (ids.size() <= cfg.max_len) return {{ids.begin(), ids.end()}, false};
    if (!cfg.truncate) {
        throw data_error("sentence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                         std::to_string(cfg.max_len) + " (enable truncation to accept it)");
    }
    return {{ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cfg.max_len)}, true};
}

class Encoder {
public:
    Encoder() = default;

    Encoder(ParameterSet& ps, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
        if (cfg.vocab_size < 2 || cfg.emb_dim == 0 || cfg.hidden == 0)
            throw config_error("encoder dimensions must be positive");
        embedding_ = ps.add("encoder.embedding", cfg.vocab_size, cfg.emb_dim);
        init_normal(embedding_, rng, 1.0);
        fwd_ = LstmParams::create(ps, "encoder.lstm_fwd", cfg.emb_dim, cfg.hidden, rng);
        bwd_ = LstmParams::create(ps, "encoder.lstm_bwd", cfg.emb_dim, cfg.hidden, rng);
        proj_ = LinearParams::create(ps, "encoder.proj", 2 * cfg.hidden, cfg.hidden, rng);
        conv_ = ConvParams::create(ps, "encoder.conv", cfg.hidden, cfg.hidden, cfg.conv_width, rng);
    }

    const EncoderConfig& config() const { return cfg_; }
    const Tensor& embedding_table() const { return embedding_; }

    Tensor embed(std::span<const std::size_t> ids) const {
        for (std::size_t id : ids) {
            if (id >= cfg_.vocab_size)
                throw dimension_error("token id " + std::to_string(id) + " out of range for vocabulary of " +
                                      std::to_string(cfg_.vocab_size));
        }
        return gather_rows(embedding_, ids);
    }

    BiLstmOutput bilstm(const Tensor& emb) const {
        const std::size_t n = emb.rows();
        const Tensor xf = matmul(emb, fwd_.w_ih);
        const Tensor xb = matmul(emb, bwd_.w_ih);
        std::vector<Tensor> hf(n), hb(n);
        LstmState s = zero_state(cfg_.hidden);
        for (std::size_t i = 0; i < n; ++i) {
            s = lstm_cell_projected(row(xf, i), s, fwd_);
            hf[i] = s.h;
        }
        s = zero_state(cfg_.hidden);
        for (std::size_t i = n; i-- > 0;) {
            s = lstm_cell_projected(row(xb, i), s, bwd_);
            hb[i] = s.h;
        }
        return {stack_rows(hf), stack_rows(hb)};
    }

    EncoderOutput encode(std::span<const std::size_t> ids) const {
        if (ids.empty()) throw data_error("cannot encode an empty sentence");
        if (ids.size() > cfg_.max_len) {
            throw data_error("sentence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                             std::to_string(cfg_.max_len) + "; apply fit_length first");
        }
        const BiLstmOutput dirs = bilstm(embed(ids));
        Tensor states = proj_(concat_cols(dirs.forward, dirs.backward));
        Tensor scratch = tanh(conv_(states));
        Tensor last = row(states, states.rows() - 1);
        return {states, scratch, last};
    }

private:
    EncoderConfig cfg_;
    Tensor embedding_;
    LstmParams fwd_;
    LstmParams bwd_;
    LinearParams proj_;
    ConvParams conv_;
};

}  // namespace umt
