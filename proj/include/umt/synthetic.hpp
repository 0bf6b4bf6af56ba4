#pragma once

// Seeded synthetic corpora for desk-scale experiments.
//
// Vocabulary is split into relation triggers ("t<k>"), entity words ("e<k>")
// and fillers ("w<k>"). Each triplet becomes a clause "HEAD trigger TAIL",
// clauses are separated by fillers, and entities never share words within a
// sentence. Two knobs shape the train/test relationship:
//
//  * combination_skew: probability that a multi-triplet sentence uses a fixed
//    relation chain. Train chains pair relation r with r+1; test chains pair
//    r with r+2, so test sentences recombine relations never seen together.
//  * overlap: exact fraction of test triplets copied from the training set;
//    the rest are guaranteed absent from it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "umt/dataset.hpp"
#include "umt/error.hpp"

namespace umt {

struct SyntheticSpec {
    std::size_t vocab_size = 100;
    std::size_t relation_count = 5;
    std::size_t train_sentences = 200;
    std::size_t test_sentences = 50;
    std::size_t min_triplets = 1;  // triplets per sentence ~ U{min, max}
    std::size_t max_triplets = 3;
    double combination_skew = 0.0;
    double overlap = 0.5;
    std::size_t max_entity_len = 2;
    std::uint64_t seed = 7;
};

struct SyntheticCorpus {
    Dataset train;
    Dataset test;
    std::vector<std::string> relations;
};

namespace detail {

struct Lexicon {
    std::vector<std::string> triggers;
    std::vector<std::string> entity_words;
    std::vector<std::string> fillers;
    std::vector<std::vector<std::size_t>> entities;  // indices into entity_words
};

inline Lexicon make_lexicon(const SyntheticSpec& spec, std::mt19937_64& rng) {
    Lexicon lex;
    const std::size_t r = spec.relation_count;
    const std::size_t fillers = std::max<std::size_t>(2, spec.vocab_size / 5);
    if (spec.vocab_size < r + fillers + 4) {
        throw config_error("infeasible synthetic spec: vocab_size " + std::to_string(spec.vocab_size) +
                           " leaves fewer than 4 entity words");
    }
    const std::size_t ew = spec.vocab_size - r - fillers;
    for (std::size_t i = 0; i < r; ++i) lex.triggers.push_back("t" + std::to_string(i));
    for (std::size_t i = 0; i < ew; ++i) lex.entity_words.push_back("e" + std::to_string(i));
    for (std::size_t i = 0; i < fillers; ++i) lex.fillers.push_back("w" + std::to_string(i));

    for (std::size_t i = 0; i < ew; ++i) lex.entities.push_back({i});
    if (spec.max_entity_len >= 2) {
        std::uniform_int_distribution<std::size_t> pick(0, ew - 1);
        std::set<std::vector<std::size_t>> seen;
        while (seen.size() < ew) {
            std::vector<std::size_t> e;
            const std::size_t len = 2 + (spec.max_entity_len > 2 ? pick(rng) % (spec.max_entity_len - 1) : 0);
            std::set<std::size_t> used;
            while (e.size() < len) {
                const std::size_t w = pick(rng);
                if (used.insert(w).second) e.push_back(w);
            }
            if (seen.insert(e).second) lex.entities.push_back(e);
        }
    }
    return lex;
}

struct Skeleton {
    std::vector<std::size_t> relations;  // one per triplet
};

inline std::string entity_text(const Lexicon& lex, std::size_t e) {
    std::string s;
    for (std::size_t w : lex.entities[e]) s += (s.empty() ? "" : " ") + lex.entity_words[w];
    return s;
}

// (head entity, relation, tail entity) in lexicon indices.
using RawTriplet = std::tuple<std::size_t, std::size_t, std::size_t>;

inline Sentence render(const Lexicon& lex, const std::vector<RawTriplet>& triplets, const std::vector<std::string>& rel_names,
                       std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> filler(0, lex.fillers.size() - 1);
    std::bernoulli_distribution lead(0.5);
    Sentence s;
    auto place = [&](std::size_t e) {
        EntitySpan sp;
        sp.begin = s.tokens.size();
        for (std::size_t w : lex.entities[e]) s.tokens.push_back(lex.entity_words[w]);
        sp.end = s.tokens.size() - 1;
        sp.text = entity_text(lex, e);
        return sp;
    };
    if (lead(rng)) s.tokens.push_back(lex.fillers[filler(rng)]);
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        if (i > 0) s.tokens.push_back(lex.fillers[filler(rng)]);
        const auto& [h, r, t] = triplets[i];
        Triplet trip;
        trip.head = place(h);
        s.tokens.push_back(lex.triggers[r]);
        trip.relation = rel_names[r];
        trip.tail = place(t);
        s.triplets.push_back(std::move(trip));
    }
    if (lead(rng)) s.tokens.push_back(lex.fillers[filler(rng)]);
    s.text = join_tokens(s.tokens, 0, s.tokens.size() - 1, " ");
    return s;
}

}  // namespace detail

inline void validate(const SyntheticSpec& spec) {
    if (spec.vocab_size == 0 || spec.relation_count == 0 || spec.train_sentences == 0 || spec.test_sentences == 0 ||
        spec.min_triplets == 0 || spec.max_entity_len == 0)
        throw config_error("synthetic spec counts must be positive");
    if (spec.min_triplets > spec.max_triplets) throw config_error("synthetic spec: min_triplets > max_triplets");
    if (!(spec.overlap >= 0.0 && spec.overlap <= 1.0)) throw config_error("synthetic spec: overlap must be in [0, 1]");
    if (!(spec.combination_skew >= 0.0 && spec.combination_skew <= 1.0))
        throw config_error("synthetic spec: combination_skew must be in [0, 1]");
    if (spec.combination_skew > 0.0 && spec.relation_count < 3)
        throw config_error("infeasible synthetic spec: combination skew needs at least 3 relations");
}

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    const detail::Lexicon lex = detail::make_lexicon(spec, rng);
    // Each sentence needs 2 * max_triplets entities with disjoint words.
    if (lex.entity_words.size() < 2 * spec.max_triplets * spec.max_entity_len) {
        throw config_error("infeasible synthetic spec: " + std::to_string(lex.entity_words.size()) +
                           " entity words cannot fill " + std::to_string(spec.max_triplets) +
                           " triplets with disjoint entities");
    }

    SyntheticCorpus corpus;
    for (std::size_t r = 0; r < spec.relation_count; ++r) corpus.relations.push_back("rel_" + std::to_string(r));
    const std::size_t R = spec.relation_count;

    std::uniform_int_distribution<std::size_t> count_dist(spec.min_triplets, spec.max_triplets);
    std::uniform_int_distribution<std::size_t> rel_dist(0, R - 1);
    std::uniform_int_distribution<std::size_t> ent_dist(0, lex.entities.size() - 1);
    std::bernoulli_distribution skewed(spec.combination_skew);

    auto skeleton = [&](std::size_t partner_step) {
        detail::Skeleton sk;
        const std::size_t k = count_dist(rng);
        if (k >= 2 && skewed(rng)) {
            std::size_t r = rel_dist(rng);
            for (std::size_t i = 0; i < k; ++i, r = (r + partner_step) % R) sk.relations.push_back(r);
        } else {
            for (std::size_t i = 0; i < k; ++i) sk.relations.push_back(rel_dist(rng));
        }
        return sk;
    };

    auto words_free = [&](std::size_t e, const std::set<std::size_t>& used) {
        return std::none_of(lex.entities[e].begin(), lex.entities[e].end(),
                            [&](std::size_t w) { return used.count(w) != 0; });
    };
    auto claim = [&](std::size_t e, std::set<std::size_t>& used) {
        for (std::size_t w : lex.entities[e]) used.insert(w);
    };
    auto fresh_entity = [&](std::set<std::size_t>& used) {
        for (int attempt = 0; attempt < 10000; ++attempt) {
            const std::size_t e = ent_dist(rng);
            if (words_free(e, used)) {
                claim(e, used);
                return e;
            }
        }
        throw config_error("infeasible synthetic spec: could not place disjoint entities");
    };

    // Training set: every triplet sampled fresh.
    std::set<std::tuple<std::string, std::string, std::string>> train_surfaces;
    std::vector<std::vector<detail::RawTriplet>> train_by_relation(R);
    for (std::size_t i = 0; i < spec.train_sentences; ++i) {
        const auto sk = skeleton(1);
        std::set<std::size_t> used;
        std::vector<detail::RawTriplet> raw;
        for (std::size_t r : sk.relations) {
            const std::size_t h = fresh_entity(used);
            const std::size_t t = fresh_entity(used);
            raw.emplace_back(h, r, t);
            train_by_relation[r].emplace_back(h, r, t);
            train_surfaces.insert({detail::entity_text(lex, h), corpus.relations[r], detail::entity_text(lex, t)});
        }
        corpus.train.push_back(detail::render(lex, raw, corpus.relations, rng));
    }

    // Test set: skeletons first, then an exact quota of reused triplets.
    std::vector<detail::Skeleton> skeletons;
    std::size_t total = 0;
    for (std::size_t i = 0; i < spec.test_sentences; ++i) {
        skeletons.push_back(skeleton(R >= 3 ? 2 : 1));
        total += skeletons.back().relations.size();
    }
    const auto reuse_count = static_cast<std::size_t>(std::llround(spec.overlap * static_cast<double>(total)));
    std::vector<bool> reuse(total, false);
    std::fill(reuse.begin(), reuse.begin() + static_cast<std::ptrdiff_t>(reuse_count), true);
    std::shuffle(reuse.begin(), reuse.end(), rng);

    std::size_t slot = 0;
    for (const auto& sk : skeletons) {
        std::set<std::size_t> used;
        std::vector<detail::RawTriplet> raw;
        for (std::size_t r : sk.relations) {
            if (reuse[slot++]) {
                const auto& pool = train_by_relation[r];
                if (pool.empty())
                    throw config_error("infeasible synthetic spec: no training triplet with relation " +
                                       corpus.relations[r] + " to reuse");
                bool placed = false;
                std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
                for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
                    const auto& cand = pool[pick(rng)];
                    const std::size_t h = std::get<0>(cand), t = std::get<2>(cand);
                    if (!words_free(h, used) || !words_free(t, used)) continue;
                    claim(h, used);
                    claim(t, used);
                    raw.push_back(cand);
                    placed = true;
                }
                if (!placed) throw config_error("infeasible synthetic spec: cannot place a reused triplet");
            } else {
                bool placed = false;
                for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
                    std::set<std::size_t> trial = used;
                    const std::size_t h = fresh_entity(trial);
                    const std::size_t t = fresh_entity(trial);
                    if (train_surfaces.count({detail::entity_text(lex, h), corpus.relations[r],
                                              detail::entity_text(lex, t)}))
                        continue;
                    used = std::move(trial);
                    raw.emplace_back(h, r, t);
                    placed = true;
                }
                if (!placed) throw config_error("infeasible synthetic spec: no unseen triplet available");
            }
        }
        corpus.test.push_back(detail::render(lex, raw, corpus.relations, rng));
    }
    return corpus;
}

// Fraction of test triplets (by surface) that occur anywhere in train.
inline double measured_overlap(const Dataset& train, const Dataset& test) {
    std::set<SurfaceTriplet> seen;
    for (const auto& s : train)
        for (const auto& t : s.triplets) seen.insert(surface(t));
    std::size_t total = 0, hit = 0;
    for (const auto& s : test) {
        for (const auto& t : s.triplets) {
            ++total;
            hit += seen.count(surface(t));
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace umt
