#pragma once

// Central finite-difference checks of every differentiable operation and of
// the full training losses.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "umt/dataset.hpp"
#include "umt/encoder.hpp"
#include "umt/flat.hpp"
#include "umt/nn.hpp"
#include "umt/tensor.hpp"
#include "umt/umtree.hpp"
#include "umt/vocab.hpp"

namespace umt {

struct GradCheckOptions {
    double eps = 1e-5;
    // Denominator floor of the relative error, so that gradients which are
    // zero up to round-off do not divide by ~0.
    double floor = 1e-6;
};

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 1e-4;
    std::size_t checked = 0;  // scalar entries compared
    bool passed() const { return max_rel_err < tolerance; }
};

inline double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// `loss` must rebuild the graph from the current values of `inputs` each call.
inline GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss,
                                       std::vector<Tensor> inputs, double tolerance,
                                       const GradCheckOptions& opt = {}) {
    for (auto& t : inputs) t.zero_grad();
    backward(loss());
    GradCheckResult res{name, 0.0, tolerance, 0};
    for (auto& t : inputs) {
        std::vector<double> analytic(t.size(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        auto v = t.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double saved = v[i];
            double up, down;
            {
                NoGradGuard ng;
                v[i] = saved + opt.eps;
                up = loss().item();
                v[i] = saved - opt.eps;
                down = loss().item();
            }
            v[i] = saved;
            const double numeric = (up - down) / (2.0 * opt.eps);
            res.max_rel_err = std::max(res.max_rel_err, relative_error(analytic[i], numeric, opt.floor));
            ++res.checked;
        }
    }
    return res;
}

namespace detail {

inline Tensor uniform_tensor(std::size_t r, std::size_t c, Rng& rng, bool grad = true) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(r * c);
    for (auto& x : v) x = u(rng);
    return Tensor::from(r, c, std::move(v), grad);
}

// Weighted sum with fixed random weights, so every output entry gets a
// distinct upstream gradient.
inline Tensor probe(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

inline void randomise(ParameterSet& ps, Rng& rng, double scale = 0.5) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& p : ps.items())
        for (double& x : p.tensor.mutable_values()) x = u(rng);
}

// Three-token sentence with two overlapping triplets over two relations.
inline Sentence tiny_sentence() {
    Sentence s;
    s.tokens = {"a", "b", "c"};
    s.text = "a b c";
    s.triplets.push_back({{0, 0, "a"}, "r0", {2, 2, "c"}});
    s.triplets.push_back({{0, 0, "a"}, "r1", {1, 2, "b c"}});
    return s;
}

}  // namespace detail

// Per-op checks (tolerance 1e-4) followed by end-to-end checks (1e-3).
inline std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed = 1, const GradCheckOptions& opt = {}) {
    using detail::probe;
    using detail::uniform_tensor;
    Rng rng(seed);
    std::vector<GradCheckResult> out;
    constexpr double kOp = 1e-4, kModel = 1e-3;

    auto unary = [&](const std::string& name, std::size_t r, std::size_t c, std::size_t outr, std::size_t outc,
                     const std::function<Tensor(const Tensor&)>& f) {
        Tensor a = uniform_tensor(r, c, rng);
        Tensor w = uniform_tensor(outr, outc, rng, false);
        out.push_back(check_gradients(name, [&] { return probe(f(a), w); }, {a}, kOp, opt));
    };
    auto binary = [&](const std::string& name, Tensor a, Tensor b, std::size_t outr, std::size_t outc,
                      const std::function<Tensor(const Tensor&, const Tensor&)>& f) {
        Tensor w = uniform_tensor(outr, outc, rng, false);
        out.push_back(check_gradients(name, [&] { return probe(f(a, b), w); }, {a, b}, kOp, opt));
    };

    binary("matmul", uniform_tensor(4, 5, rng), uniform_tensor(5, 6, rng), 4, 6,
           [](const Tensor& a, const Tensor& b) { return matmul(a, b); });
    unary("transpose", 3, 4, 4, 3, [](const Tensor& a) { return transpose(a); });
    binary("add", uniform_tensor(3, 4, rng), uniform_tensor(3, 4, rng), 3, 4,
           [](const Tensor& a, const Tensor& b) { return add(a, b); });
    binary("add_row", uniform_tensor(3, 4, rng), uniform_tensor(1, 4, rng), 3, 4,
           [](const Tensor& a, const Tensor& b) { return add_row(a, b); });
    binary("mul", uniform_tensor(3, 4, rng), uniform_tensor(3, 4, rng), 3, 4,
           [](const Tensor& a, const Tensor& b) { return mul(a, b); });
    unary("scale", 3, 4, 3, 4, [](const Tensor& a) { return scale(a, -1.7); });
    unary("sigmoid", 3, 4, 3, 4, [](const Tensor& a) { return sigmoid(a); });
    unary("tanh", 3, 4, 3, 4, [](const Tensor& a) { return tanh(a); });
    unary("slice_cols", 3, 6, 3, 2, [](const Tensor& a) { return slice_cols(a, 2, 2); });
    unary("row", 4, 3, 1, 3, [](const Tensor& a) { return row(a, 2); });
    binary("concat_cols", uniform_tensor(3, 2, rng), uniform_tensor(3, 4, rng), 3, 6,
           [](const Tensor& a, const Tensor& b) { return concat_cols(a, b); });
    binary("stack_rows", uniform_tensor(1, 3, rng), uniform_tensor(1, 3, rng), 2, 3,
           [](const Tensor& a, const Tensor& b) {
               const Tensor rows[] = {a, b};
               return stack_rows(rows);
           });
    unary("gather_rows", 5, 3, 4, 3, [](const Tensor& a) {
        const std::size_t ids[] = {1, 3, 1, 0};
        return gather_rows(a, ids);
    });
    unary("repeat_rows", 1, 4, 3, 4, [](const Tensor& a) { return repeat_rows(a, 3); });
    unary("sigmoid_max_over_rows", 5, 3, 1, 3, [](const Tensor& a) { return sigmoid(max_over_rows(a)); });
    unary("softmax_rows", 3, 5, 3, 5, [](const Tensor& a) { return softmax_rows(a); });
    {
        Tensor x = uniform_tensor(6, 4, rng), w = uniform_tensor(12, 5, rng), b = uniform_tensor(1, 5, rng);
        Tensor probe_w = uniform_tensor(6, 5, rng, false);
        out.push_back(check_gradients("conv1d_same", [&] { return probe(conv1d_same(x, w, b, 3), probe_w); },
                                      {x, w, b}, kOp, opt));
    }
    {
        Tensor a = uniform_tensor(2, 3, rng);
        out.push_back(check_gradients("sum", [&] { return sum(a); }, {a}, kOp, opt));
        Tensor s1 = uniform_tensor(1, 1, rng), s2 = uniform_tensor(1, 1, rng);
        out.push_back(check_gradients("add_scalars", [&] {
            const Tensor terms[] = {s1, scale(s2, 3.0), s1};
            return add_scalars(terms);
        }, {s1, s2}, kOp, opt));
    }
    {
        Tensor logits = uniform_tensor(3, 4, rng);
        std::vector<double> targets{1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 1, 0};
        out.push_back(check_gradients("bce_sum", [&] { return bce_sum(sigmoid(logits), targets); }, {logits}, kOp,
                                      opt));
        Tensor l2 = uniform_tensor(1, 6, rng);
        out.push_back(check_gradients("softmax_cross_entropy", [&] { return softmax_cross_entropy(l2, 4); }, {l2},
                                      kOp, opt));
    }
    {
        ParameterSet ps;
        LstmParams p = LstmParams::create(ps, "lstm", 8, 8, rng);
        detail::randomise(ps, rng, 0.5);
        Tensor x = uniform_tensor(1, 8, rng), h0 = uniform_tensor(1, 8, rng), c0 = uniform_tensor(1, 8, rng);
        Tensor wh = uniform_tensor(1, 8, rng, false), wc = uniform_tensor(1, 8, rng, false);
        std::vector<Tensor> inputs{x, h0, c0};
        for (auto& q : ps.items()) inputs.push_back(q.tensor);
        out.push_back(check_gradients("lstm_cell", [&] {
            LstmState s = lstm_cell(x, {h0, c0}, p);
            return add(probe(s.h, wh), probe(s.c, wc));
        }, inputs, kOp, opt));
    }

    // End-to-end checks on small models.
    Dataset corpus{detail::tiny_sentence()};
    const Vocab vocab = Vocab::build(corpus);
    const RelationDict rels = RelationDict::from_dataset(corpus);
    UMTreeConfig cfg;
    cfg.encoder.emb_dim = 4;
    cfg.encoder.hidden = 4;
    {
        Seq2UMTree model(cfg, vocab, rels, seed);
        const Sentence& s = corpus.front();
        const auto ids = vocab.encode(s.tokens);
        Tensor emb = model.encoder().embedding_table();
        Tensor pw = uniform_tensor(3, 4, rng, false);
        out.push_back(check_gradients("encoder_embedding", [&] {
            EncoderOutput e = model.encoder().encode(ids);
            return add(probe(e.states, pw), probe(e.scratchpad0, pw));
        }, {emb}, kModel, opt));

        const EncoderOutput enc = model.encode(s);
        Tensor prev = uniform_tensor(3, 4, rng);
        out.push_back(check_gradients("decode_step_scratchpad", [&] {
            DecodePath p = model.root_path(enc);
            p.scratchpad = prev;
            StepOutput o = model.decode_step(p, model.step_input_embedding(PrefixItem::sos(), prev));
            return sum(model.relation_head(o.scratchpad));
        }, {prev}, kModel, opt));

        std::vector<Tensor> all;
        for (auto& q : model.params().items()) all.push_back(q.tensor);
        for (const auto& order : DecodeOrder::all()) {
            model.set_order(order);
            out.push_back(check_gradients("umtree_loss_" + order.name(), [&] { return model.training_loss(s); },
                                          all, kModel, opt));
        }
    }
    {
        FlatConfig fcfg;
        fcfg.encoder = cfg.encoder;
        FlatSeq2Seq flat(fcfg, vocab, rels, seed);
        std::vector<Tensor> all;
        for (auto& q : flat.params().items()) all.push_back(q.tensor);
        out.push_back(check_gradients("flat_loss", [&] { return flat.training_loss(corpus.front()); }, all, kModel,
                                      opt));
    }
    return out;
}

}  // namespace umt
