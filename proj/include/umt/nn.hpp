#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "umt/error.hpp"
#include "umt/tensor.hpp"

namespace umt {

using Rng = std::mt19937_64;

struct Parameter {
    std::string name;
    Tensor tensor;
};

// Named, ordered collection of trainable tensors. Names are dotted paths such
// as "encoder.lstm_fwd.W_ih" and double as checkpoint keys.
class ParameterSet {
public:
    Tensor add(const std::string& name, std::size_t rows, std::size_t cols) {
        for (const auto& p : params_) {
            if (p.name == name) throw config_error("duplicate parameter name '" + name + "'");
        }
        Tensor t(rows, cols, 0.0, /*requires_grad=*/true);
        params_.push_back({name, t});
        return t;
    }

    const Tensor& get(const std::string& name) const {
        for (const auto& p : params_) {
            if (p.name == name) return p.tensor;
        }
        throw config_error("unknown parameter '" + name + "'");
    }

    std::vector<Parameter>& items() { return params_; }
    const std::vector<Parameter>& items() const { return params_; }
    std::size_t size() const { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

private:
    std::vector<Parameter> params_;
};

inline void init_normal(Tensor& t, Rng& rng, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.mutable_values()) v = dist(rng);
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) where fan_in is the row count of an
// [in x out] weight.
inline void init_fan_in(Tensor& t, Rng& rng, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.mutable_values()) v = dist(rng);
}

// Gate columns are laid out as [input | forget | candidate | output].
struct LstmParams {
    Tensor w_ih;  // [d_in x 4h]
    Tensor w_hh;  // [h x 4h]
    Tensor bias;  // [1 x 4h]
    std::size_t hidden = 0;

    static LstmParams create(ParameterSet& ps, const std::string& prefix, std::size_t d_in,
                             std::size_t hidden, Rng& rng) {
        LstmParams p;
        p.hidden = hidden;
        p.w_ih = ps.add(prefix + ".W_ih", d_in, 4 * hidden);
        p.w_hh = ps.add(prefix + ".W_hh", hidden, 4 * hidden);
        p.bias = ps.add(prefix + ".b", 1, 4 * hidden);
        init_fan_in(p.w_ih, rng, hidden);
        init_fan_in(p.w_hh, rng, hidden);
        init_fan_in(p.bias, rng, hidden);
        return p;
    }
};

struct LstmState {
    Tensor h;  // [1 x h]
    Tensor c;  // [1 x h]
};

// One cell step given the already-projected input x * W_ih ([1 x 4h]).
inline LstmState lstm_cell_projected(const Tensor& x_proj, const LstmState& prev, const LstmParams& p) {
    const std::size_t h = p.hidden;
    if (x_proj.rows() != 1 || x_proj.cols() != 4 * h || prev.h.cols() != h || prev.c.cols() != h ||
        prev.h.rows() != 1 || prev.c.rows() != 1) {
        throw dimension_error("lstm_cell: expected projected input [1x" + std::to_string(4 * h) +
                              "] and state [1x" + std::to_string(h) + "], got " + x_proj.shape_string() +
                              ", " + prev.h.shape_string() + ", " + prev.c.shape_string());
    }
    Tensor gates = add(add(x_proj, matmul(prev.h, p.w_hh)), p.bias);
    Tensor in = sigmoid(slice_cols(gates, 0, h));
    Tensor forget = sigmoid(slice_cols(gates, h, h));
    Tensor cand = tanh(slice_cols(gates, 2 * h, h));
    Tensor out = sigmoid(slice_cols(gates, 3 * h, h));
    Tensor c = add(mul(forget, prev.c), mul(in, cand));
    Tensor hn = mul(out, tanh(c));
    return {hn, c};
}

inline LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmParams& p) {
    if (x.rows() != 1 || x.cols() != p.w_ih.rows()) {
        throw dimension_error("lstm_cell: input " + x.shape_string() + " does not match W_ih " +
                              p.w_ih.shape_string());
    }
    return lstm_cell_projected(matmul(x, p.w_ih), prev, p);
}

inline LstmState zero_state(std::size_t hidden) {
    return {Tensor(1, hidden), Tensor(1, hidden)};
}

// Same-padded convolution weights; see conv1d_same for the layout.
struct ConvParams {
    Tensor weight;  // [width * d_in x d_out]
    Tensor bias;    // [1 x d_out]
    std::size_t width = 3;

    static ConvParams create(ParameterSet& ps, const std::string& prefix, std::size_t d_in,
                             std::size_t d_out, std::size_t width, Rng& rng) {
        ConvParams c;
        c.width = width;
        c.weight = ps.add(prefix + ".W", width * d_in, d_out);
        c.bias = ps.add(prefix + ".b", 1, d_out);
        init_fan_in(c.weight, rng, width * d_in);
        init_fan_in(c.bias, rng, width * d_in);
        return c;
    }

    Tensor operator()(const Tensor& seq) const { return conv1d_same(seq, weight, bias, width); }
};

struct LinearParams {
    Tensor weight;  // [d_in x d_out]
    Tensor bias;    // [1 x d_out]

    static LinearParams create(ParameterSet& ps, const std::string& prefix, std::size_t d_in,
                               std::size_t d_out, Rng& rng) {
        LinearParams l;
        l.weight = ps.add(prefix + ".W", d_in, d_out);
        l.bias = ps.add(prefix + ".b", 1, d_out);
        init_fan_in(l.weight, rng, d_in);
        init_fan_in(l.bias, rng, d_in);
        return l;
    }

    Tensor operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }
};

}  // namespace umt
