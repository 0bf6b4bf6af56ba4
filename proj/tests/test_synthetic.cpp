#include <gtest/gtest.h>

#include <set>

#include "umt/synthetic.hpp"

using namespace umt;

namespace {

std::set<SurfaceTriplet> surfaces(const Dataset& d) {
    std::set<SurfaceTriplet> out;
    for (const auto& s : d)
        for (const auto& t : s.triplets) out.insert(surface(t));
    return out;
}

std::size_t reoccurring(const Dataset& train, const Dataset& test) {
    const auto seen = surfaces(train);
    std::size_t n = 0;
    for (const auto& s : test)
        for (const auto& t : s.triplets) n += seen.count(surface(t));
    return n;
}

std::size_t triplet_count(const Dataset& d) {
    std::size_t n = 0;
    for (const auto& s : d) n += s.triplets.size();
    return n;
}

std::size_t rel_index(const std::string& name) { return std::stoul(name.substr(4)); }

}  // namespace

TEST(Synthetic, EverySentenceIsValid) {
    const SyntheticCorpus c = generate_synthetic({});
    EXPECT_EQ(c.train.size(), 200u);
    EXPECT_EQ(c.test.size(), 50u);
    EXPECT_EQ(c.relations.size(), 5u);
    for (const auto* d : {&c.train, &c.test}) {
        for (const auto& s : *d) {
            EXPECT_FALSE(validate(s).has_value()) << *validate(s);
            EXPECT_GE(s.triplets.size(), 1u);
            EXPECT_LE(s.triplets.size(), 3u);
        }
    }
}

TEST(Synthetic, SameSeedIsBitwiseIdentical) {
    SyntheticSpec spec;
    spec.seed = 42;
    const SyntheticCorpus a = generate_synthetic(spec), b = generate_synthetic(spec);
    ASSERT_EQ(a.train.size(), b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(sentence_to_json(a.train[i]), sentence_to_json(b.train[i]));
    for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(sentence_to_json(a.test[i]), sentence_to_json(b.test[i]));
    spec.seed = 43;
    const SyntheticCorpus c = generate_synthetic(spec);
    EXPECT_NE(sentence_to_json(a.train[0]), sentence_to_json(c.train[0]));
}

TEST(Synthetic, ZeroOverlapMeansNoTestTripletInTrain) {
    SyntheticSpec spec;
    spec.overlap = 0.0;
    const SyntheticCorpus c = generate_synthetic(spec);
    EXPECT_EQ(reoccurring(c.train, c.test), 0u);
    EXPECT_EQ(measured_overlap(c.train, c.test), 0.0);
}

TEST(Synthetic, NinetyPercentOverlapOnThousandTestTriplets) {
    SyntheticSpec spec;
    spec.overlap = 0.9;
    spec.min_triplets = spec.max_triplets = 2;
    spec.train_sentences = 1000;
    spec.test_sentences = 500;  // 1000 test triplets
    spec.vocab_size = 300;
    const SyntheticCorpus c = generate_synthetic(spec);
    ASSERT_EQ(triplet_count(c.test), 1000u);
    const std::size_t n = reoccurring(c.train, c.test);
    EXPECT_GE(n, 880u);
    EXPECT_LE(n, 920u);
}

TEST(Synthetic, MeasuredOverlapWithinTwoPointsAcrossRates) {
    for (double rate : {0.1, 0.3, 0.5, 0.7, 1.0}) {
        SyntheticSpec spec;
        spec.overlap = rate;
        spec.test_sentences = 200;
        const SyntheticCorpus c = generate_synthetic(spec);
        EXPECT_NEAR(measured_overlap(c.train, c.test), rate, 0.02) << rate;
    }
}

TEST(Synthetic, SkewedCombinationsAreRecombinedInTest) {
    SyntheticSpec spec;
    spec.combination_skew = 1.0;
    spec.min_triplets = spec.max_triplets = 2;
    spec.overlap = 0.0;
    const SyntheticCorpus c = generate_synthetic(spec);
    const std::size_t R = spec.relation_count;
    std::set<std::pair<std::size_t, std::size_t>> train_pairs;
    for (const auto& s : c.train) {
        std::size_t a = rel_index(s.triplets[0].relation), b = rel_index(s.triplets[1].relation);
        // Rendering order is positional; the pair is {r, r+1 mod R} either way.
        EXPECT_TRUE((a + 1) % R == b || (b + 1) % R == a) << a << " " << b;
        train_pairs.insert(std::minmax(a, b));
    }
    for (const auto& s : c.test) {
        std::size_t a = rel_index(s.triplets[0].relation), b = rel_index(s.triplets[1].relation);
        EXPECT_TRUE((a + 2) % R == b || (b + 2) % R == a) << a << " " << b;
        EXPECT_EQ(train_pairs.count(std::minmax(a, b)), 0u);
    }
}

TEST(Synthetic, PartialSkewMatchesProbability) {
    SyntheticSpec spec;
    spec.combination_skew = 0.5;
    spec.min_triplets = spec.max_triplets = 2;
    spec.train_sentences = 2000;
    spec.relation_count = 10;
    spec.vocab_size = 300;
    const SyntheticCorpus c = generate_synthetic(spec);
    std::size_t chained = 0;
    for (const auto& s : c.train) {
        const std::size_t a = rel_index(s.triplets[0].relation), b = rel_index(s.triplets[1].relation);
        chained += (a + 1) % 10 == b || (b + 1) % 10 == a;
    }
    // Skewed sentences (p = 0.5) plus unskewed ones that chain by chance (2/10).
    const double expected = 0.5 + 0.5 * 0.2;
    EXPECT_NEAR(static_cast<double>(chained) / 2000.0, expected, 0.04);
}

TEST(Synthetic, InfeasibleSpecsAreRejected) {
    auto expect_config_error = [](SyntheticSpec spec) {
        try {
            generate_synthetic(spec);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), "ConfigError") << e.what();
        }
    };
    SyntheticSpec s;
    s.overlap = 1.5;
    expect_config_error(s);
    s = {};
    s.vocab_size = 8;
    expect_config_error(s);
    s = {};
    s.relation_count = 2;
    s.combination_skew = 0.5;
    expect_config_error(s);
    s = {};
    s.min_triplets = 4;
    s.max_triplets = 2;
    expect_config_error(s);
    s = {};
    s.train_sentences = 0;
    expect_config_error(s);
}
