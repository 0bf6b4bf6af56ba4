#include <gtest/gtest.h>

#include <cmath>

#include "umt/gradcheck.hpp"
#include "umt/nn.hpp"

using namespace umt;

namespace {

double norm_diff(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a.values()[i] - b.values()[i]) * (a.values()[i] - b.values()[i]);
    return std::sqrt(s);
}

}  // namespace

TEST(LstmCell, ZeroWeightsGiveZeroHidden) {
    ParameterSet ps;
    Rng rng(1);
    LstmParams p = LstmParams::create(ps, "l", 5, 4, rng);
    for (auto& q : ps.items())
        for (double& v : q.tensor.mutable_values()) v = 0.0;
    Tensor x = detail::uniform_tensor(1, 5, rng, false);
    LstmState s = lstm_cell(x, {detail::uniform_tensor(1, 4, rng, false), Tensor(1, 4)}, p);
    for (double v : s.h.values()) EXPECT_EQ(v, 0.0);
}

TEST(LstmCell, HiddenBoundedInOpenUnitInterval) {
    ParameterSet ps;
    Rng rng(2);
    LstmParams p = LstmParams::create(ps, "l", 3, 6, rng);
    detail::randomise(ps, rng, 3.0);
    LstmState s = zero_state(6);
    for (int t = 0; t < 20; ++t) {
        s = lstm_cell(detail::uniform_tensor(1, 3, rng, false), s, p);
        for (double v : s.h.values()) {
            EXPECT_GT(v, -1.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(LstmCell, GradientMatchesFiniteDifferences) {
    ParameterSet ps;
    Rng rng(3);
    LstmParams p = LstmParams::create(ps, "l", 8, 8, rng);
    Tensor x = detail::uniform_tensor(1, 8, rng), h = detail::uniform_tensor(1, 8, rng),
           c = detail::uniform_tensor(1, 8, rng);
    std::vector<Tensor> in{x, h, c, p.w_ih, p.w_hh, p.bias};
    auto r = check_gradients("lstm", [&] {
        LstmState s = lstm_cell(x, {h, c}, p);
        return add(sum(s.h), sum(mul(s.c, s.c)));
    }, in, 1e-4);
    EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(LstmCell, FrozenInputConvergesToFixedPoint) {
    ParameterSet ps;
    Rng rng(4);
    LstmParams p = LstmParams::create(ps, "l", 4, 6, rng);
    Tensor x = detail::uniform_tensor(1, 4, rng, false);
    LstmState s = zero_state(6);
    std::vector<double> deltas;
    for (int t = 0; t < 100; ++t) {
        LstmState next = lstm_cell(x, s, p);
        deltas.push_back(norm_diff(next.h, s.h));
        s = next;
    }
    for (std::size_t t = 30; t < deltas.size(); ++t) EXPECT_LE(deltas[t], deltas[t - 1] + 1e-15) << t;
    EXPECT_LT(deltas.back(), 1e-6);
}

TEST(LstmCell, DimensionMismatchRejected) {
    ParameterSet ps;
    Rng rng(5);
    LstmParams p = LstmParams::create(ps, "l", 4, 6, rng);
    EXPECT_THROW(lstm_cell(Tensor(1, 5), zero_state(6), p), Error);
    EXPECT_THROW(lstm_cell(Tensor(1, 4), zero_state(5), p), Error);
}

TEST(Conv, RandomInputGradientCheck) {
    ParameterSet ps;
    Rng rng(6);
    ConvParams conv = ConvParams::create(ps, "c", 4, 3, 3, rng);
    Tensor x = detail::uniform_tensor(6, 4, rng);
    Tensor w = detail::uniform_tensor(6, 3, rng, false);
    auto r = check_gradients("conv", [&] { return sum(mul(conv(x), w)); }, {x, conv.weight, conv.bias}, 1e-4);
    EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(ParameterSet, DuplicateNamesRejected) {
    ParameterSet ps;
    ps.add("a", 1, 1);
    EXPECT_THROW(ps.add("a", 2, 2), Error);
    EXPECT_EQ(ps.size(), 1u);
}

TEST(ParameterSet, ScalarCountAndZeroGrad) {
    ParameterSet ps;
    Tensor a = ps.add("a", 2, 3);
    ps.add("b", 1, 4);
    EXPECT_EQ(ps.scalar_count(), 10u);
    backward(sum(a));
    ps.zero_grad();
    for (double g : a.grad()) EXPECT_EQ(g, 0.0);
}
