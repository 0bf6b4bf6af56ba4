#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "umt/gradcheck.hpp"
#include "umt/umtree.hpp"

using namespace umt;

namespace {

EntitySpan span(const std::vector<std::string>& toks, std::size_t b, std::size_t e) {
    return {b, e, join_tokens(toks, b, e, " ")};
}

// "h1 x t1 y t2" with triplets (h1, r1, t1) and (h1, r1, t2).
Sentence shared_head_sentence() {
    Sentence s;
    s.tokens = {"h1", "x", "t1", "y", "t2"};
    s.text = "h1 x t1 y t2";
    s.triplets.push_back({span(s.tokens, 0, 0), "r1", span(s.tokens, 2, 2)});
    s.triplets.push_back({span(s.tokens, 0, 0), "r1", span(s.tokens, 4, 4)});
    return s;
}

struct Fixture {
    Dataset data;
    Vocab vocab;
    RelationDict rels;
    UMTreeConfig cfg;

    explicit Fixture(Dataset d, std::size_t h = 6) : data(std::move(d)) {
        vocab = Vocab::build(data);
        rels = RelationDict(std::vector<std::string>{"r0", "r1", "r2"});
        cfg.encoder.emb_dim = h;
        cfg.encoder.hidden = h;
    }
    Seq2UMTree model(std::uint64_t seed = 1) const { return Seq2UMTree(cfg, vocab, rels, seed); }
};

void fill(Tensor t, double v) {
    for (double& x : t.mutable_values()) x = v;
}

double bce(const std::vector<double>& p, const std::vector<double>& y) {
    double l = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
        l -= y[i] * std::log(q) + (1 - y[i]) * std::log(1 - q);
    }
    return l;
}

std::vector<double> as_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Runs one prefix from the root with no sharing, then scores its head.
double example_loss(const Seq2UMTree& m, const Sentence& s, const std::vector<PrefixItem>& prefix, Element kind,
                    const std::vector<double>& t_rel, const std::vector<double>& t_begin,
                    const std::vector<double>& t_end) {
    const EncoderOutput enc = m.encode(s);
    DecodePath path = m.root_path(enc);
    StepOutput out = m.advance(path);
    for (std::size_t i = 1; i < prefix.size(); ++i) {
        path = m.fork(path, out, prefix[i]);
        out = m.advance(path);
    }
    if (kind == Element::Relation) return bce(as_vec(m.relation_head(out.scratchpad)), t_rel);
    EntityProbs p = m.entity_head(out.scratchpad);
    return bce(as_vec(p.begin), t_begin) + bce(as_vec(p.end), t_end);
}

}  // namespace

TEST(DecodeOrder, ParseVariantsAndAllSix) {
    EXPECT_EQ(DecodeOrder::parse("r-t-h"), DecodeOrder::parse("rth"));
    EXPECT_EQ(DecodeOrder::parse("r,t,h").name(), "rth");
    EXPECT_THROW(DecodeOrder::parse("rrh"), Error);
    EXPECT_THROW(DecodeOrder::parse("rt"), Error);
    std::set<std::string> names;
    for (const auto& o : DecodeOrder::all()) names.insert(o.name());
    EXPECT_EQ(names, (std::set<std::string>{"hrt", "htr", "rht", "rth", "thr", "trh"}));
}

TEST(StepInputEmbedding, SingleTokenEntityDoublesRow) {
    Fixture f({shared_head_sentence()});
    auto m = f.model();
    Rng rng(2);
    Tensor pad = detail::uniform_tensor(5, 6, rng, false);
    Tensor w = m.step_input_embedding(PrefixItem::entity({3, 3, ""}), pad);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(w.values()[j], 2 * pad.at(3, j));
}

TEST(StepInputEmbedding, EntitySumsBoundaryRows) {
    Fixture f({shared_head_sentence()});
    auto m = f.model();
    Rng rng(3);
    Tensor pad = detail::uniform_tensor(5, 6, rng, false);
    Tensor w = m.step_input_embedding(PrefixItem::entity({0, 2, ""}), pad);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(w.values()[j], pad.at(0, j) + pad.at(2, j));
    EXPECT_THROW(m.step_input_embedding(PrefixItem::entity({3, 5, ""}), pad), Error);
}

TEST(StepInputEmbedding, SosIndependentOfSentence) {
    Fixture f({shared_head_sentence()});
    auto m = f.model();
    Rng rng(4);
    Tensor a = m.step_input_embedding(PrefixItem::sos(), detail::uniform_tensor(5, 6, rng, false));
    Tensor b = m.step_input_embedding(PrefixItem::sos(), detail::uniform_tensor(2, 6, rng, false));
    EXPECT_EQ(as_vec(a), as_vec(b));
    Tensor r = m.step_input_embedding(PrefixItem::rel(2), Tensor(1, 6));
    EXPECT_EQ(as_vec(r), as_vec(row(m.params().get("decoder.relation_embedding"), 2)));
}

TEST(DecodeStep, SingleRowAttentionIsExact) {
    Sentence s;
    s.tokens = {"solo"};
    s.text = "solo";
    s.triplets.push_back({{0, 0, "solo"}, "r0", {0, 0, "solo"}});
    Fixture f({s});
    auto m = f.model();
    const EncoderOutput enc = m.encode(s);
    DecodePath root = m.root_path(enc);
    StepOutput out = m.advance(root);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(out.context.values()[j], enc.scratchpad0.at(0, j));
    EXPECT_EQ(out.scratchpad.shape(), enc.scratchpad0.shape());
}

TEST(DecodeStep, DeterministicAndDepthLimited) {
    const Sentence s = shared_head_sentence();
    Fixture f({s});
    auto m = f.model();
    const EncoderOutput enc = m.encode(s);
    DecodePath root = m.root_path(enc);
    StepOutput a = m.advance(root), b = m.advance(root);
    EXPECT_EQ(as_vec(a.scratchpad), as_vec(b.scratchpad));
    EXPECT_EQ(as_vec(a.state.h), as_vec(b.state.h));
    DecodePath deep = root;
    deep.depth = 3;
    try {
        m.advance(deep);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "DepthError");
    }
}

TEST(DecodeStep, ScratchpadGradientMatchesFiniteDifferences) {
    const Sentence s = shared_head_sentence();
    Fixture f({s});
    auto m = f.model();
    const EncoderOutput enc = m.encode(s);
    Rng rng(5);
    Tensor prev = detail::uniform_tensor(5, 6, rng);
    auto r = check_gradients("step", [&] {
        DecodePath p = m.root_path(enc);
        p.scratchpad = prev;
        StepOutput o = m.decode_step(p, m.step_input_embedding(PrefixItem::entity({1, 3, ""}), prev));
        EntityProbs e = m.entity_head(o.scratchpad);
        return add(sum(e.begin), sum(m.relation_head(o.scratchpad)));
    }, {prev}, 1e-3);
    EXPECT_LT(r.max_rel_err, 1e-3);
}

TEST(RelationHead, ZeroParametersGiveHalf) {
    Fixture f({shared_head_sentence()});
    auto m = f.model();
    fill(m.params().get("heads.relation.W"), 0.0);
    fill(m.params().get("heads.relation.b"), 0.0);
    Rng rng(6);
    const Tensor probs = m.relation_head(detail::uniform_tensor(4, 6, rng, false));
    for (double p : probs.values()) EXPECT_EQ(p, 0.5);
}

TEST(RelationHead, InvariantToRowPermutation) {
    Fixture f({shared_head_sentence()});
    auto m = f.model();
    Rng rng(7);
    Tensor pad = detail::uniform_tensor(4, 6, rng, false);
    const std::size_t perm[] = {2, 0, 3, 1};
    EXPECT_EQ(as_vec(m.relation_head(pad)), as_vec(m.relation_head(gather_rows(pad, perm))));
}

TEST(RelationHead, HandBuiltIdentity) {
    Fixture f({shared_head_sentence()}, 3);
    auto m = f.model();
    Tensor w = m.params().get("heads.relation.W");  // [3 x 3]
    fill(w, 0.0);
    for (std::size_t i = 0; i < 3; ++i) w.mutable_values()[i * 3 + i] = 1.0;
    fill(m.params().get("heads.relation.b"), 0.0);
    Tensor pad = Tensor::from(2, 3, {0.5, -1.0, 2.0, 1.5, -3.0, 0.0});
    Tensor p = m.relation_head(pad);
    EXPECT_DOUBLE_EQ(p.values()[0], 1 / (1 + std::exp(-1.5)));
    EXPECT_DOUBLE_EQ(p.values()[1], 1 / (1 + std::exp(1.0)));
    EXPECT_DOUBLE_EQ(p.values()[2], 1 / (1 + std::exp(-2.0)));
}

TEST(EntityHead, ZeroParametersAndPositionwise) {
    Fixture f({shared_head_sentence()});
    auto m = f.model();
    Rng rng(8);
    Tensor pad = detail::uniform_tensor(4, 6, rng, false);
    EntityProbs base = m.entity_head(pad);
    Tensor doubled = Tensor::from(4, 6, as_vec(pad));
    for (std::size_t j = 0; j < 6; ++j) doubled.mutable_values()[2 * 6 + j] *= 2;
    EntityProbs changed = m.entity_head(doubled);
    for (std::size_t i = 0; i < 4; ++i) {
        if (i == 2) {
            EXPECT_NE(base.begin.values()[i], changed.begin.values()[i]);
        } else {
            EXPECT_EQ(base.begin.values()[i], changed.begin.values()[i]);
            EXPECT_EQ(base.end.values()[i], changed.end.values()[i]);
        }
    }
    for (const char* n : {"heads.entity_begin.W", "heads.entity_begin.b", "heads.entity_end.W", "heads.entity_end.b"})
        fill(m.params().get(n), 0.0);
    EntityProbs zero = m.entity_head(pad);
    for (double p : zero.begin.values()) EXPECT_EQ(p, 0.5);
    for (double p : zero.end.values()) EXPECT_EQ(p, 0.5);
    EntityProbs one = m.entity_head(detail::uniform_tensor(1, 6, rng, false));
    EXPECT_EQ(one.begin.size(), 1u);
    EXPECT_EQ(one.end.size(), 1u);
}

TEST(DecodeSpans, NearestQualifyingEnd) {
    const std::vector<double> b{.9, .1, .8, .1, .1}, e{.1, .95, .1, .1, .7};
    auto spans = decode_spans(b, e, 0.5);
    ASSERT_EQ(spans.size(), 2u);
    EXPECT_EQ(spans[0].key(), (std::pair<std::size_t, std::size_t>{0, 1}));
    EXPECT_EQ(spans[1].key(), (std::pair<std::size_t, std::size_t>{2, 4}));
}

TEST(DecodeSpans, EmptyAndSingleToken) {
    const std::vector<double> lo{.1, .2, .3};
    EXPECT_TRUE(decode_spans(lo, lo, 0.5).empty());
    const std::vector<double> one{.9};
    auto spans = decode_spans(one, one, 0.5);
    ASSERT_EQ(spans.size(), 1u);
    EXPECT_EQ(spans[0].key(), (std::pair<std::size_t, std::size_t>{0, 0}));
}

TEST(DecodeSpans, MaxSpanLengthAndOverlap) {
    const std::vector<double> b{.9, .9, .1, .1}, e{.1, .1, .1, .9};
    EXPECT_EQ(decode_spans(b, e, 0.5, 3).size(), 1u);  // (1,3) fits, (0,3) does not
    EXPECT_EQ(decode_spans(b, e, 0.5, 4).size(), 2u);  // overlapping spans allowed
}

TEST(ExpandTrainingExamples, SharedHeadUnderRth) {
    const Sentence s = shared_head_sentence();
    const RelationDict rels(std::vector<std::string>{"r0", "r1", "r2"});
    auto ex = expand_training_examples(s, DecodeOrder::parse("r-t-h"), rels);
    ASSERT_EQ(ex.size(), 4u);
    // root -> {r1}
    EXPECT_EQ(ex[0].prefix.size(), 1u);
    EXPECT_EQ(ex[0].targets.relations, (std::vector<double>{0, 1, 0}));
    // (r1) -> {t1, t2}
    EXPECT_EQ(ex[1].prefix.back(), PrefixItem::rel(1));
    EXPECT_EQ(ex[1].targets.begins, (std::vector<double>{0, 0, 1, 0, 1}));
    EXPECT_EQ(ex[1].targets.ends, (std::vector<double>{0, 0, 1, 0, 1}));
    // (r1, t1) -> {h1} and (r1, t2) -> {h1}
    for (std::size_t k : {2u, 3u}) {
        EXPECT_EQ(ex[k].prefix.size(), 3u);
        EXPECT_EQ(ex[k].targets.begins, (std::vector<double>{1, 0, 0, 0, 0}));
    }
    EXPECT_EQ(ex[2].prefix[2].span.begin, 2u);
    EXPECT_EQ(ex[3].prefix[2].span.begin, 4u);
}

TEST(ExpandTrainingExamples, SingleTripletGivesThreeForEveryOrder) {
    Sentence s = shared_head_sentence();
    s.triplets.resize(1);
    const RelationDict rels(std::vector<std::string>{"r0", "r1", "r2"});
    for (const auto& o : DecodeOrder::all()) EXPECT_EQ(expand_training_examples(s, o, rels).size(), 3u) << o.name();
}

TEST(ExpandTrainingExamples, OutOfRangeSpanRejected) {
    Sentence s = shared_head_sentence();
    s.triplets[0].tail = {4, 5, "t2"};
    const RelationDict rels(std::vector<std::string>{"r0", "r1", "r2"});
    EXPECT_THROW(expand_training_examples(s, DecodeOrder(), rels), Error);
}

TEST(TrainingLoss, PerfectProbabilitiesHitClampFloor) {
    Tensor p = Tensor::from(1, 4, {1.0, 0.0, 1.0, 0.0});
    const std::vector<double> y{1, 0, 1, 0};
    EXPECT_LT(bce_sum(p, y).item() / 4, 1e-5);
}

TEST(TrainingLoss, MatchesBruteForceExamples) {
    const Sentence s = shared_head_sentence();
    Fixture f({s});
    auto m = f.model(3);
    m.set_order(DecodeOrder::parse("rth"));
    const std::vector<double> none5(5, 0.0), none3(3, 0.0);
    const auto t1 = PrefixItem::entity(s.triplets[0].tail), t2 = PrefixItem::entity(s.triplets[1].tail);
    const auto sos = PrefixItem::sos(), r1 = PrefixItem::rel(1);
    double expect = 0.0;
    expect += example_loss(m, s, {sos}, Element::Relation, {0, 1, 0}, {}, {});
    expect += example_loss(m, s, {sos, r1}, Element::Tail, {}, {0, 0, 1, 0, 1}, {0, 0, 1, 0, 1});
    expect += example_loss(m, s, {sos, r1, t1}, Element::Head, {}, {1, 0, 0, 0, 0}, {1, 0, 0, 0, 0});
    expect += example_loss(m, s, {sos, r1, t2}, Element::Head, {}, {1, 0, 0, 0, 0}, {1, 0, 0, 0, 0});
    EXPECT_NEAR(m.training_loss(s).item(), expect, 1e-10 * std::abs(expect));
}

TEST(TrainingLoss, BitwiseInvariantToGoldOrder) {
    Sentence s = shared_head_sentence();
    s.triplets.push_back({span(s.tokens, 2, 3), "r0", span(s.tokens, 0, 1)});
    s.triplets.push_back({span(s.tokens, 4, 4), "r2", span(s.tokens, 0, 0)});
    Fixture f({s});
    auto m = f.model(4);
    std::mt19937_64 rng(9);
    for (const auto& o : DecodeOrder::all()) {
        m.set_order(o);
        const double base = m.training_loss(s).item();
        for (int k = 0; k < 10; ++k) {
            Sentence p = s;
            std::shuffle(p.triplets.begin(), p.triplets.end(), rng);
            EXPECT_EQ(m.training_loss(p).item(), base) << o.name();
        }
    }
}

TEST(TrainingLoss, GradientsAreFinite) {
    const Sentence s = shared_head_sentence();
    Fixture f({s});
    auto m = f.model();
    backward(m.training_loss(s));
    for (const auto& p : m.params().items()) {
        ASSERT_TRUE(p.tensor.has_grad()) << p.name;
        EXPECT_TRUE(all_finite(p.tensor.grad())) << p.name;
    }
}

TEST(DecodeTree, AllBelowThresholdGivesEmpty) {
    const Sentence s = shared_head_sentence();
    Fixture f({s});
    auto m = f.model();
    fill(m.params().get("heads.relation.W"), 0.0);
    fill(m.params().get("heads.relation.b"), -30.0);
    m.set_order(DecodeOrder::parse("rth"));
    DecodeResult r = m.decode_tree(s);
    EXPECT_TRUE(r.triplets.empty());
    EXPECT_EQ(r.decode_steps, 1u);
}

TEST(DecodeTree, EveryPathTakesThreeSteps) {
    const Sentence s = shared_head_sentence();
    Fixture f({s});
    auto m = f.model();
    // Force every head to fire so the tree is as wide as the caps allow.
    for (const char* n : {"heads.relation.b", "heads.entity_begin.b", "heads.entity_end.b"})
        fill(m.params().get(n), 30.0);
    for (const auto& o : DecodeOrder::all()) {
        m.set_order(o);
        DecodeResult r = m.decode_tree(s);
        EXPECT_FALSE(r.leaf_steps.empty());
        for (std::size_t k : r.leaf_steps) EXPECT_EQ(k, 3u);
        // 3 relations, 5 single-token spans per entity layer (caps 10).
        EXPECT_EQ(r.triplets.size(), 3u * 5u * 5u) << o.name();
    }
}

TEST(DecodeTree, CapsBoundFanOut) {
    const Sentence s = shared_head_sentence();
    Fixture f({s});
    auto m = f.model();
    for (const char* n : {"heads.relation.b", "heads.entity_begin.b", "heads.entity_end.b"})
        fill(m.params().get(n), 30.0);
    m.set_order(DecodeOrder::parse("rth"));
    m.limits().max_d1 = 2;
    m.limits().max_d2 = 3;
    m.limits().max_d3 = 1;
    EXPECT_EQ(m.decode_tree(s).triplets.size(), 2u * 3u * 1u);
}

TEST(DecodeTree, SiblingShuffleLeavesSetUnchanged) {
    const Sentence s = shared_head_sentence();
    Fixture f({s});
    auto m = f.model(7);
    // Moderate biases so that some but not all heads fire.
    for (const char* n : {"heads.entity_begin.b", "heads.entity_end.b"}) fill(m.params().get(n), 0.3);
    fill(m.params().get("heads.relation.b"), 0.5);
    for (const auto& o : DecodeOrder::all()) {
        m.set_order(o);
        const auto base = m.decode_tree(s).triplets;
        EXPECT_FALSE(base.empty()) << o.name();
        for (int k = 0; k < 5; ++k) {
            Rng shuffle(static_cast<std::uint64_t>(k));
            DecodeOptions opt;
            opt.shuffle_siblings = &shuffle;
            EXPECT_EQ(m.decode_tree(s, opt).triplets, base) << o.name();
        }
    }
}

TEST(DecodeTree, PredictedSpanTextFollowsTokens) {
    const Sentence s = shared_head_sentence();
    Fixture f({s});
    auto m = f.model();
    for (const char* n : {"heads.relation.b", "heads.entity_begin.b", "heads.entity_end.b"})
        fill(m.params().get(n), 30.0);
    for (const auto& t : m.decode_tree(s).triplets) {
        EXPECT_EQ(t.head.text, join_tokens(s.tokens, t.head.begin, t.head.end, " "));
        EXPECT_EQ(t.tail.text, join_tokens(s.tokens, t.tail.begin, t.tail.end, " "));
    }
}
