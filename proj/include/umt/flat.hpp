#pragma once

// Ordered sequence baseline: the triplet set is flattened into one token
// sequence ("head SEP relation SEP tail SEP ... EOS") in a fixed canonical
// order and decoded greedily, one symbol at a time. It shares the encoder
// design with Seq2UMTree so that comparisons isolate the decoder.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "umt/dataset.hpp"
#include "umt/encoder.hpp"
#include "umt/error.hpp"
#include "umt/nn.hpp"
#include "umt/tensor.hpp"
#include "umt/vocab.hpp"

namespace umt {

// Output symbols: BOS, EOS, SEP, UNK, one per relation, then words.
class FlatVocab {
public:
    static constexpr std::size_t kBos = 0;
    static constexpr std::size_t kEos = 1;
    static constexpr std::size_t kSep = 2;
    static constexpr std::size_t kUnk = 3;

    FlatVocab() = default;
    FlatVocab(const Vocab& words, const RelationDict& rels) : relation_count_(rels.size()) {
        symbols_ = {"BOS", "EOS", "SEP", "UNK"};
        for (const auto& r : rels.names()) symbols_.push_back(r);
        word_base_ = symbols_.size();
        for (std::size_t i = 2; i < words.size(); ++i) {
            word_ids_.emplace(words.token(i), symbols_.size());
            symbols_.push_back(words.token(i));
        }
    }

    std::size_t size() const { return symbols_.size(); }
    const std::string& symbol(std::size_t id) const { return symbols_.at(id); }
    std::size_t relation_symbol(std::size_t rel_id) const { return 4 + rel_id; }
    bool is_relation(std::size_t id) const { return id >= 4 && id < 4 + relation_count_; }
    std::size_t relation_of(std::size_t id) const { return id - 4; }
    bool is_word(std::size_t id) const { return id >= word_base_ && id < symbols_.size(); }

    std::size_t word(const std::string& token) const {
        auto it = word_ids_.find(token);
        return it == word_ids_.end() ? kUnk : it->second;
    }

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, std::size_t> word_ids_;
    std::size_t relation_count_ = 0;
    std::size_t word_base_ = 4;
};

struct FlatTarget {
    std::vector<std::size_t> ids;
    std::vector<std::string> symbols;  // readable form, same length as ids
};

// Canonical order is alphabetical on (head surface, relation, tail surface);
// identical surface triplets collapse. Returns nullopt when the serialised
// form would exceed max_decode_len, in which case the sentence is excluded.
inline std::optional<FlatTarget> flatten_targets(const Sentence& s, const FlatVocab& vocab,
                                                 const RelationDict& rels, std::size_t max_decode_len = 50) {
    if (s.triplets.empty()) throw data_error("flatten_targets: sentence has no triplets");
    struct Item {
        SurfaceTriplet key;
        const Triplet* t;
    };
    std::vector<Item> items;
    for (const auto& t : s.triplets) items.push_back({surface(t), &t});
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.key < b.key; });
    items.erase(std::unique(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.key == b.key; }),
                items.end());

    FlatTarget out;
    auto push = [&](std::size_t id) {
        out.ids.push_back(id);
        out.symbols.push_back(vocab.symbol(id));
    };
    auto push_span = [&](const EntitySpan& e) {
        for (std::size_t i = e.begin; i <= e.end; ++i) push(vocab.word(s.tokens.at(i)));
    };
    for (const auto& it : items) {
        push_span(it.t->head);
        push(FlatVocab::kSep);
        push(vocab.relation_symbol(rels.id(it.t->relation)));
        push(FlatVocab::kSep);
        push_span(it.t->tail);
        push(FlatVocab::kSep);
    }
    push(FlatVocab::kEos);
    if (out.ids.size() > max_decode_len) return std::nullopt;
    return out;
}

struct FlatConfig {
    EncoderConfig encoder;
    std::size_t max_decode_len = 50;
    Tokenization tokenization = Tokenization::Whitespace;
};

struct FlatDecodeResult {
    std::vector<Triplet> triplets;
    std::vector<std::size_t> symbols;  // raw greedy output, EOS excluded
    std::size_t malformed = 0;         // blocks dropped while parsing
};

// Parses "head SEP rel SEP tail SEP" blocks. Blocks with a wrong shape, or
// whose entity tokens cannot be found in the sentence, are dropped.
inline FlatDecodeResult parse_flat_output(const std::vector<std::size_t>& symbols, const FlatVocab& vocab,
                                          const RelationDict& rels, const std::vector<std::string>& tokens,
                                          Tokenization tokenization) {
    FlatDecodeResult res;
    res.symbols = symbols;
    std::vector<std::vector<std::size_t>> groups(1);
    for (std::size_t id : symbols) {
        if (id == FlatVocab::kSep) groups.emplace_back();
        else groups.back().push_back(id);
    }
    const bool dangling = !groups.back().empty();
    groups.pop_back();  // text after the last SEP is never a complete group
    if (dangling) ++res.malformed;

    const std::string joiner = joiner_for(tokenization);
    auto locate = [&](const std::vector<std::size_t>& g) -> std::optional<EntitySpan> {
        if (g.empty()) return std::nullopt;
        std::vector<std::string> words;
        for (std::size_t id : g) {
            if (!vocab.is_word(id)) return std::nullopt;
            words.push_back(vocab.symbol(id));
        }
        if (words.size() > tokens.size()) return std::nullopt;
        for (std::size_t b = 0; b + words.size() <= tokens.size(); ++b) {
            if (std::equal(words.begin(), words.end(), tokens.begin() + static_cast<std::ptrdiff_t>(b)))
                return EntitySpan{b, b + words.size() - 1, join_tokens(tokens, b, b + words.size() - 1, joiner)};
        }
        return std::nullopt;
    };

    std::set<Triplet> found;
    std::size_t i = 0;
    for (; i + 3 <= groups.size(); i += 3) {
        const auto head = locate(groups[i]);
        const auto tail = locate(groups[i + 2]);
        const auto& rg = groups[i + 1];
        if (!head || !tail || rg.size() != 1 || !vocab.is_relation(rg[0])) {
            ++res.malformed;
            continue;
        }
        found.insert({*head, rels.name(vocab.relation_of(rg[0])), *tail});
    }
    if (i < groups.size()) ++res.malformed;
    res.triplets.assign(found.begin(), found.end());
    return res;
}

class FlatSeq2Seq {
public:
    FlatSeq2Seq(const FlatConfig& cfg, Vocab vocab, RelationDict relations, std::uint64_t seed)
        : cfg_(cfg), vocab_(std::move(vocab)), relations_(std::move(relations)), out_vocab_(vocab_, relations_) {
        cfg_.encoder.vocab_size = vocab_.size();
        Rng rng(seed);
        const std::size_t h = cfg_.encoder.hidden, v = out_vocab_.size();
        encoder_ = Encoder(params_, cfg_.encoder, rng);
        symbol_emb_ = params_.add("flat.symbol_embedding", v, h);
        init_normal(symbol_emb_, rng, 1.0);
        decoder_ = LstmParams::create(params_, "flat.lstm", h, h, rng);
        attn_ = params_.add("flat.attention.W", h, h);
        init_fan_in(attn_, rng, h);
        combine_ = LinearParams::create(params_, "flat.combine", 2 * h, h, rng);
        out_ = LinearParams::create(params_, "flat.out", h, v, rng);
    }

    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    const FlatVocab& output_vocab() const { return out_vocab_; }
    const RelationDict& relations() const { return relations_; }
    const Vocab& vocab() const { return vocab_; }
    const FlatConfig& config() const { return cfg_; }

    std::optional<FlatTarget> target(const Sentence& s) const {
        return flatten_targets(s, out_vocab_, relations_, cfg_.max_decode_len);
    }

    // Teacher-forced cross-entropy of an arbitrary symbol sequence.
    Tensor sequence_loss(const Sentence& s, const std::vector<std::size_t>& ids) const {
        const EncoderOutput enc = encoder_.encode(fit_length(vocab_.encode(s.tokens), cfg_.encoder).ids);
        const Tensor mem_t = transpose(enc.states);
        LstmState st{enc.final_state, Tensor(1, cfg_.encoder.hidden)};
        std::size_t prev = FlatVocab::kBos;
        std::vector<Tensor> terms;
        for (std::size_t id : ids) {
            Tensor logits = step(enc.states, mem_t, st, prev);
            terms.push_back(softmax_cross_entropy(logits, id));
            prev = id;
        }
        return add_scalars(terms);
    }

    // Excluded (overlong) sentences must be filtered out before training.
    Tensor training_loss(const Sentence& s) const {
        auto t = target(s);
        if (!t) throw data_error("sentence target exceeds max_decode_len");
        return sequence_loss(s, t->ids);
    }

    FlatDecodeResult decode(const Sentence& s) const {
        NoGradGuard no_grad;
        const EncoderOutput enc = encoder_.encode(fit_length(vocab_.encode(s.tokens), cfg_.encoder).ids);
        const Tensor mem_t = transpose(enc.states);
        LstmState st{enc.final_state, Tensor(1, cfg_.encoder.hidden)};
        std::size_t prev = FlatVocab::kBos;
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < cfg_.max_decode_len; ++k) {
            const Tensor logits = step(enc.states, mem_t, st, prev);
            const auto lv = logits.values();
            const std::size_t best = static_cast<std::size_t>(std::max_element(lv.begin(), lv.end()) - lv.begin());
            if (best == FlatVocab::kEos) break;
            out.push_back(best);
            prev = best;
        }
        return parse_flat_output(out, out_vocab_, relations_, s.tokens, cfg_.tokenization);
    }

    std::vector<Triplet> predict(const Sentence& s) const { return decode(s).triplets; }
    Tensor loss(const Sentence& s) const { return training_loss(s); }

private:
    // Advances the decoder by one symbol and returns logits over the output vocabulary.
    Tensor step(const Tensor& mem, const Tensor& mem_t, LstmState& st, std::size_t prev) const {
        st = lstm_cell(row(symbol_emb_, prev), st, decoder_);
        Tensor weights = softmax_rows(matmul(matmul(st.h, attn_), mem_t));
        Tensor context = matmul(weights, mem);
        Tensor combined = tanh(combine_(concat_cols(context, st.h)));
        return out_(combined);
    }

    FlatConfig cfg_;
    Vocab vocab_;
    RelationDict relations_;
    FlatVocab out_vocab_;
    ParameterSet params_;
    Encoder encoder_;
    Tensor symbol_emb_;
    LstmParams decoder_;
    Tensor attn_;
    LinearParams combine_;
    LinearParams out_;
};

}  // namespace umt
