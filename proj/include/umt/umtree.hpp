#pragma once

// Unordered-multi-tree triplet decoder.
//
// Each triplet is a root-to-leaf path of depth three. The root consumes the
// start-of-sentence embedding; every later step consumes the element predicted
// one level up. Each path owns its decoder state and scratchpad, and a child
// starts from its parent's post-step copies, so siblings never interact.

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "umt/dataset.hpp"
#include "umt/encoder.hpp"
#include "umt/error.hpp"
#include "umt/nn.hpp"
#include "umt/tensor.hpp"
#include "umt/vocab.hpp"

namespace umt {

enum class Element { Head, Relation, Tail };

inline char element_letter(Element e) {
    switch (e) {
        case Element::Head: return 'h';
        case Element::Relation: return 'r';
        case Element::Tail: return 't';
    }
    return '?';
}

class DecodeOrder {
public:
    DecodeOrder() : seq_{Element::Relation, Element::Tail, Element::Head} {}
    explicit DecodeOrder(std::array<Element, 3> seq) : seq_(seq) {
        int seen[3] = {0, 0, 0};
        for (Element e : seq_) ++seen[static_cast<int>(e)];
        if (seen[0] != 1 || seen[1] != 1 || seen[2] != 1)
            throw config_error("decode order must be a permutation of {h, r, t}");
    }

    // Accepts "rth", "r-t-h", "r,t,h" and similar.
    static DecodeOrder parse(std::string_view text) {
        std::array<Element, 3> seq{};
        std::size_t k = 0;
        for (char c : text) {
            if (c == '-' || c == ',' || c == ' ') continue;
            if (k == 3) throw config_error("decode order '" + std::string(text) + "' has more than 3 elements");
            switch (c) {
                case 'h': case 'H': seq[k++] = Element::Head; break;
                case 'r': case 'R': seq[k++] = Element::Relation; break;
                case 't': case 'T': seq[k++] = Element::Tail; break;
                default: throw config_error("decode order '" + std::string(text) + "': unknown element '" + c + "'");
            }
        }
        if (k != 3) throw config_error("decode order '" + std::string(text) + "' needs exactly 3 elements");
        return DecodeOrder(seq);
    }

    static std::array<DecodeOrder, 6> all() {
        return {parse("hrt"), parse("htr"), parse("rht"), parse("rth"), parse("thr"), parse("trh")};
    }

    Element at(std::size_t depth) const { return seq_.at(depth); }
    std::string name() const { return {element_letter(seq_[0]), element_letter(seq_[1]), element_letter(seq_[2])}; }

    friend bool operator==(const DecodeOrder&, const DecodeOrder&) = default;

private:
    std::array<Element, 3> seq_;
};

struct PrefixItem {
    enum class Kind { Sos, Relation, Entity };

    Kind kind = Kind::Sos;
    std::size_t relation = 0;
    EntitySpan span;

    static PrefixItem sos() { return {}; }
    static PrefixItem rel(std::size_t id) { return {Kind::Relation, id, {}}; }
    static PrefixItem entity(EntitySpan s) { return {Kind::Entity, 0, std::move(s)}; }

    auto key() const {
        return std::tuple(static_cast<int>(kind), kind == Kind::Relation ? relation : 0,
                          kind == Kind::Entity ? span.begin : 0, kind == Kind::Entity ? span.end : 0);
    }
    friend bool operator==(const PrefixItem& a, const PrefixItem& b) { return a.key() == b.key(); }
    friend bool operator<(const PrefixItem& a, const PrefixItem& b) { return a.key() < b.key(); }
};

struct DecodePath {
    std::size_t depth = 0;
    std::vector<PrefixItem> items;  // items.size() == depth + 1, SOS first
    LstmState state;                // decoder state the next step starts from
    Tensor scratchpad;              // [n x h]; the memory the last item was read from
    std::size_t steps = 0;          // decode_step calls along this path so far
};

struct StepOutput {
    LstmState state;
    Tensor scratchpad;  // o_t
    Tensor context;     // a_t, [1 x h]
};

struct StepTargets {
    Element kind = Element::Relation;
    std::vector<double> relations;  // multi-hot over relation ids
    std::vector<double> begins;     // multi-hot over positions
    std::vector<double> ends;       // multi-hot over positions

    friend bool operator==(const StepTargets&, const StepTargets&) = default;
};

struct TrainingExample {
    std::vector<PrefixItem> prefix;  // SOS first, then gold items
    StepTargets targets;
};

struct EntityProbs {
    Tensor begin;  // [n x 1]
    Tensor end;    // [n x 1]
};

struct DecodeLimits {
    double threshold = 0.5;
    std::size_t max_span_len = 10;
    // Fan-out caps per depth; 0 means uncapped.
    std::size_t max_d1 = 0;
    std::size_t max_d2 = 10;
    std::size_t max_d3 = 10;

    std::size_t cap(std::size_t depth) const {
        const std::size_t c = depth == 1 ? max_d1 : depth == 2 ? max_d2 : max_d3;
        return c == 0 ? static_cast<std::size_t>(-1) : c;
    }
};

struct UMTreeConfig {
    EncoderConfig encoder;
    DecodeOrder order;
    DecodeLimits limits;
    Tokenization tokenization = Tokenization::Whitespace;
};

struct DecodeOptions {
    // When set, sibling expansion order is shuffled with this generator.
    Rng* shuffle_siblings = nullptr;
};

struct DecodeResult {
    std::vector<Triplet> triplets;       // deduplicated, sorted
    std::size_t decode_steps = 0;        // total decode_step calls
    std::vector<std::size_t> leaf_steps; // decode_step count of every completed path
};

// Nearest-qualifying-end pairing. Each begin at or above the threshold pairs
// with the closest end at or after it that is also above the threshold and
// lies within max_span_len tokens. Text is left empty.
inline std::vector<EntitySpan> decode_spans(std::span<const double> prob_begin, std::span<const double> prob_end,
                                            double threshold, std::size_t max_span_len = 10) {
    if (prob_begin.size() != prob_end.size())
        throw dimension_error("decode_spans: begin/end lengths differ");
    std::vector<EntitySpan> spans;
    const std::size_t n = prob_begin.size();
    for (std::size_t b = 0; b < n; ++b) {
        if (prob_begin[b] < threshold) continue;
        for (std::size_t e = b; e < n && e - b < max_span_len; ++e) {
            if (prob_end[e] >= threshold) {
                spans.push_back({b, e, {}});
                break;
            }
        }
    }
    return spans;
}

namespace detail {

// Gold tree keyed by canonical item order, so iteration never depends on the
// order triplets were listed in.
struct GoldTree {
    std::map<PrefixItem, std::map<PrefixItem, std::set<PrefixItem>>> children;
};

inline PrefixItem item_for(const Triplet& t, Element e, const RelationDict& rels) {
    switch (e) {
        case Element::Head: return PrefixItem::entity(t.head);
        case Element::Tail: return PrefixItem::entity(t.tail);
        case Element::Relation: return PrefixItem::rel(rels.id(t.relation));
    }
    return PrefixItem::sos();
}

inline GoldTree build_gold_tree(const Sentence& s, const DecodeOrder& order, const RelationDict& rels) {
    const std::size_t n = s.tokens.size();
    GoldTree tree;
    for (const auto& t : s.triplets) {
        for (const EntitySpan* e : {&t.head, &t.tail}) {
            if (e->begin > e->end || e->end >= n)
                throw data_error("triplet span [" + std::to_string(e->begin) + ", " + std::to_string(e->end) +
                                 "] out of range for " + std::to_string(n) + " tokens");
        }
        tree.children[item_for(t, order.at(0), rels)][item_for(t, order.at(1), rels)].insert(
            item_for(t, order.at(2), rels));
    }
    return tree;
}

template <typename Range>
StepTargets targets_for(Element kind, const Range& items, std::size_t n, std::size_t r) {
    StepTargets tg;
    tg.kind = kind;
    if (kind == Element::Relation) {
        tg.relations.assign(r, 0.0);
        for (const auto& it : items) tg.relations.at(it.relation) = 1.0;
    } else {
        tg.begins.assign(n, 0.0);
        tg.ends.assign(n, 0.0);
        for (const auto& it : items) {
            tg.begins.at(it.span.begin) = 1.0;
            tg.ends.at(it.span.end) = 1.0;
        }
    }
    return tg;
}

template <typename Map>
std::vector<PrefixItem> keys_of(const Map& m) {
    std::vector<PrefixItem> out;
    for (const auto& [k, v] : m) out.push_back(k);
    return out;
}

}  // namespace detail

// One example per internal node of the gold tree: the root, every depth-1
// value, and every (depth-1, depth-2) pair, in that order.
inline std::vector<TrainingExample> expand_training_examples(const Sentence& s, const DecodeOrder& order,
                                                             const RelationDict& rels) {
    if (s.triplets.empty()) throw data_error("expand_training_examples: sentence has no triplets");
    const std::size_t n = s.tokens.size(), r = rels.size();
    const auto tree = detail::build_gold_tree(s, order, rels);
    const auto sos = PrefixItem::sos();

    std::vector<TrainingExample> out;
    out.push_back({{sos}, detail::targets_for(order.at(0), detail::keys_of(tree.children), n, r)});
    for (const auto& [d1, sub] : tree.children)
        out.push_back({{sos, d1}, detail::targets_for(order.at(1), detail::keys_of(sub), n, r)});
    for (const auto& [d1, sub] : tree.children)
        for (const auto& [d2, leaves] : sub)
            out.push_back({{sos, d1, d2}, detail::targets_for(order.at(2), leaves, n, r)});
    return out;
}

// Applies the encoder's max_len policy to a whole sentence: tokens past the
// limit are cut and triplets touching them are dropped. Throws if the
// sentence is too long and truncation is disabled.
inline Sentence fit_sentence(const Sentence& s, const EncoderConfig& cfg) {
    if (s.tokens.empty()) throw data_error("cannot encode an empty sentence");
    if (s.tokens.size() <= cfg.max_len) return s;
    if (!cfg.truncate) {
        throw data_error("sentence of " + std::to_string(s.tokens.size()) + " tokens exceeds max_len " +
                         std::to_string(cfg.max_len) + " (enable truncation to accept it)");
    }
    Sentence out;
    out.text = s.text;
    out.tokens.assign(s.tokens.begin(), s.tokens.begin() + static_cast<std::ptrdiff_t>(cfg.max_len));
    for (const auto& t : s.triplets)
        if (t.head.end < cfg.max_len && t.tail.end < cfg.max_len) out.triplets.push_back(t);
    return out;
}

class Seq2UMTree {
public:
    Seq2UMTree(const UMTreeConfig& cfg, Vocab vocab, RelationDict relations, std::uint64_t seed)
        : cfg_(cfg), vocab_(std::move(vocab)), relations_(std::move(relations)) {
        if (relations_.size() == 0) throw config_error("relation dictionary is empty");
        cfg_.encoder.vocab_size = vocab_.size();
        Rng rng(seed);
        const std::size_t h = cfg_.encoder.hidden;
        encoder_ = Encoder(params_, cfg_.encoder, rng);
        decoder_ = LstmParams::create(params_, "decoder.lstm", h, h, rng);
        attn_ = params_.add("decoder.attention.W", h, h);
        init_fan_in(attn_, rng, h);
        conv_ = ConvParams::create(params_, "decoder.conv", 2 * h, h, cfg_.encoder.conv_width, rng);
        sos_ = params_.add("decoder.sos", 1, h);
        init_normal(sos_, rng, 1.0);
        rel_emb_ = params_.add("decoder.relation_embedding", relations_.size(), h);
        init_normal(rel_emb_, rng, 1.0);
        rel_head_ = LinearParams::create(params_, "heads.relation", h, relations_.size(), rng);
        begin_head_ = LinearParams::create(params_, "heads.entity_begin", h, 1, rng);
        end_head_ = LinearParams::create(params_, "heads.entity_end", h, 1, rng);
    }

    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    const UMTreeConfig& config() const { return cfg_; }
    const Encoder& encoder() const { return encoder_; }
    const Vocab& vocab() const { return vocab_; }
    const RelationDict& relations() const { return relations_; }
    void set_order(const DecodeOrder& order) { cfg_.order = order; }
    DecodeLimits& limits() { return cfg_.limits; }

    EncoderOutput encode(const Sentence& s) const {
        const auto ids = vocab_.encode(s.tokens);
        return encoder_.encode(fit_length(ids, cfg_.encoder).ids);
    }

    DecodePath root_path(const EncoderOutput& enc) const {
        DecodePath p;
        p.depth = 0;
        p.items = {PrefixItem::sos()};
        p.state = {enc.final_state, Tensor(1, cfg_.encoder.hidden)};
        p.scratchpad = enc.scratchpad0;
        return p;
    }

    Tensor step_input_embedding(const PrefixItem& item, const Tensor& parent_scratchpad) const {
        switch (item.kind) {
            case PrefixItem::Kind::Sos: return sos_;
            case PrefixItem::Kind::Relation:
                if (item.relation >= relations_.size())
                    throw dimension_error("relation id " + std::to_string(item.relation) + " out of range");
                return row(rel_emb_, item.relation);
            case PrefixItem::Kind::Entity: {
                const auto& sp = item.span;
                if (sp.begin > sp.end || sp.end >= parent_scratchpad.rows())
                    throw dimension_error("entity span [" + std::to_string(sp.begin) + ", " +
                                          std::to_string(sp.end) + "] out of range for scratchpad " +
                                          parent_scratchpad.shape_string());
                return add(row(parent_scratchpad, sp.begin), row(parent_scratchpad, sp.end));
            }
        }
        throw dimension_error("unknown prefix item");
    }

    StepOutput decode_step(const DecodePath& path, const Tensor& w) const {
        if (path.depth >= 3) throw Error("DepthError", "decode_step on a complete path of depth 3");
        const Tensor& mem = path.scratchpad;
        LstmState s = lstm_cell(w, path.state, decoder_);
        // Luong "general" scoring: score_i = mem_i . (s W)
        Tensor query = matmul(s.h, attn_);
        Tensor weights = softmax_rows(matmul(query, transpose(mem)));  // [1 x n]
        Tensor context = matmul(weights, mem);                           // [1 x h]
        // tanh lets the context interact with each position; a linear conv would
        // only add the same context term to every row.
        Tensor next = tanh(conv_(concat_cols(repeat_rows(context, mem.rows()), mem)));
        return {s, next, context};
    }

    DecodePath fork(const DecodePath& parent, const StepOutput& out, PrefixItem item) const {
        DecodePath child;
        child.depth = parent.depth + 1;
        child.items = parent.items;
        child.items.push_back(std::move(item));
        child.state = out.state;
        child.scratchpad = out.scratchpad;
        child.steps = parent.steps + 1;
        return child;
    }

    // Runs the step that consumes path.items.back().
    StepOutput advance(const DecodePath& path) const {
        return decode_step(path, step_input_embedding(path.items.back(), path.scratchpad));
    }

    Tensor relation_head(const Tensor& scratchpad) const {
        return sigmoid(max_over_rows(rel_head_(scratchpad)));
    }

    EntityProbs entity_head(const Tensor& scratchpad) const {
        return {sigmoid(begin_head_(scratchpad)), sigmoid(end_head_(scratchpad))};
    }

    Tensor head_loss(Element kind, const Tensor& scratchpad, const StepTargets& tg) const {
        if (kind == Element::Relation) return bce_sum(relation_head(scratchpad), tg.relations);
        const EntityProbs p = entity_head(scratchpad);
        const std::array<Tensor, 2> terms{bce_sum(p.begin, tg.begins), bce_sum(p.end, tg.ends)};
        return add_scalars(terms);
    }

    std::vector<TrainingExample> training_examples(const Sentence& s) const {
        return expand_training_examples(s, cfg_.order, relations_);
    }

    // Teacher-forced loss summed over every internal node of the gold tree.
    // Shared prefixes are computed once; the value equals running each
    // training example from the root independently.
    Tensor training_loss(const Sentence& sentence) const {
        if (sentence.triplets.empty()) throw data_error("training_loss: sentence has no triplets");
        const Sentence s = fit_sentence(sentence, cfg_.encoder);
        if (s.triplets.empty()) throw data_error("training_loss: no triplet survives truncation");
        const std::size_t n = s.tokens.size(), r = relations_.size();
        const auto& order = cfg_.order;
        const auto tree = detail::build_gold_tree(s, order, relations_);
        const EncoderOutput enc = encode(s);

        std::vector<Tensor> terms;
        const DecodePath root = root_path(enc);
        const StepOutput out0 = advance(root);
        terms.push_back(head_loss(order.at(0), out0.scratchpad,
                                  detail::targets_for(order.at(0), detail::keys_of(tree.children), n, r)));

        struct Level1 {
            DecodePath path;
            StepOutput out;
            const std::map<PrefixItem, std::set<PrefixItem>>* sub;
        };
        std::vector<Level1> level1;
        for (const auto& [d1, sub] : tree.children) {
            DecodePath p = fork(root, out0, d1);
            StepOutput o = advance(p);
            terms.push_back(head_loss(order.at(1), o.scratchpad,
                                      detail::targets_for(order.at(1), detail::keys_of(sub), n, r)));
            level1.push_back({std::move(p), std::move(o), &sub});
        }
        for (const auto& l1 : level1) {
            for (const auto& [d2, leaves] : *l1.sub) {
                DecodePath p = fork(l1.path, l1.out, d2);
                StepOutput o = advance(p);
                terms.push_back(head_loss(order.at(2), o.scratchpad, detail::targets_for(order.at(2), leaves, n, r)));
            }
        }
        return add_scalars(terms);
    }

    // Thresholded predictions for the element decoded at `depth` (1..3).
    std::vector<PrefixItem> predict_items(std::size_t depth, const Tensor& scratchpad,
                                          const std::vector<std::string>& tokens) const {
        const Element kind = cfg_.order.at(depth - 1);
        const auto& lim = cfg_.limits;
        const std::size_t cap = lim.cap(depth);
        std::vector<std::pair<double, PrefixItem>> scored;
        if (kind == Element::Relation) {
            const Tensor p = relation_head(scratchpad);
            for (std::size_t i = 0; i < p.cols(); ++i)
                if (p.values()[i] >= lim.threshold) scored.push_back({p.values()[i], PrefixItem::rel(i)});
        } else {
            const EntityProbs p = entity_head(scratchpad);
            const auto pb = p.begin.values(), pe = p.end.values();
            const std::string joiner = joiner_for(cfg_.tokenization);
            for (auto& sp : decode_spans(pb, pe, lim.threshold, lim.max_span_len)) {
                sp.text = join_tokens(tokens, sp.begin, sp.end, joiner);
                scored.push_back({pb[sp.begin] * pe[sp.end], PrefixItem::entity(sp)});
            }
        }
        if (scored.size() > cap) {
            std::stable_sort(scored.begin(), scored.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            scored.resize(cap);
        }
        std::vector<PrefixItem> items;
        for (auto& [score, it] : scored) items.push_back(std::move(it));
        std::sort(items.begin(), items.end());
        return items;
    }

    Triplet assemble(const DecodePath& leaf) const {
        Triplet t;
        for (std::size_t d = 0; d < 3; ++d) {
            const PrefixItem& it = leaf.items.at(d + 1);
            switch (cfg_.order.at(d)) {
                case Element::Head: t.head = it.span; break;
                case Element::Tail: t.tail = it.span; break;
                case Element::Relation: t.relation = relations_.name(it.relation); break;
            }
        }
        return t;
    }

    // Layer-by-layer autoregressive decoding with frozen parameters.
    DecodeResult decode_tree(const Sentence& s, const DecodeOptions& opt = {}) const {
        NoGradGuard no_grad;
        DecodeResult result;
        const EncoderOutput enc = encode(s);
        std::set<Triplet> found;

        std::vector<DecodePath> layer{root_path(enc)};
        for (std::size_t depth = 0; depth < 3; ++depth) {
            if (opt.shuffle_siblings) std::shuffle(layer.begin(), layer.end(), *opt.shuffle_siblings);
            std::vector<DecodePath> next;
            for (const DecodePath& path : layer) {
                const StepOutput out = advance(path);
                ++result.decode_steps;
                auto items = predict_items(depth + 1, out.scratchpad, s.tokens);
                if (opt.shuffle_siblings) std::shuffle(items.begin(), items.end(), *opt.shuffle_siblings);
                for (auto& it : items) next.push_back(fork(path, out, std::move(it)));
            }
            layer = std::move(next);
        }
        for (const DecodePath& leaf : layer) {
            if (leaf.depth != 3 || leaf.steps != 3)
                throw Error("InvariantViolation", "emitted triplet from a path with " + std::to_string(leaf.steps) +
                                                      " decode steps");
            result.leaf_steps.push_back(leaf.steps);
            found.insert(assemble(leaf));
        }
        result.triplets.assign(found.begin(), found.end());
        return result;
    }

    std::vector<Triplet> predict(const Sentence& s) const { return decode_tree(s).triplets; }
    Tensor loss(const Sentence& s) const { return training_loss(s); }

private:
    UMTreeConfig cfg_;
    Vocab vocab_;
    RelationDict relations_;
    ParameterSet params_;
    Encoder encoder_;
    LstmParams decoder_;
    Tensor attn_;
    ConvParams conv_;
    Tensor sos_;
    Tensor rel_emb_;
    LinearParams rel_head_;
    LinearParams begin_head_;
    LinearParams end_head_;
};

}  // namespace umt
