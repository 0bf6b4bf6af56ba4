#pragma once

// Exact-match triplet scoring. Triplets are compared on (head surface,
// relation, tail surface) and both sides are deduplicated per sentence.

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "umt/dataset.hpp"
#include "umt/error.hpp"

namespace umt {

struct EvalReport {
    std::size_t predicted = 0;
    std::size_t gold = 0;
    std::size_t correct = 0;
    std::size_t sentences = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // Sub-reports in presentation order; empty buckets are absent.
    std::vector<std::pair<std::string, EvalReport>> buckets;

    static EvalReport from_counts(std::size_t predicted, std::size_t gold, std::size_t correct) {
        EvalReport r;
        r.predicted = predicted;
        r.gold = gold;
        r.correct = correct;
        r.precision = predicted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(predicted);
        r.recall = gold == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold);
        r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
        return r;
    }

    const EvalReport* bucket(const std::string& label) const {
        for (const auto& [k, v] : buckets)
            if (k == label) return &v;
        return nullptr;
    }
};

using SurfaceSet = std::set<SurfaceTriplet>;

inline SurfaceSet surface_set(const std::vector<Triplet>& ts) {
    SurfaceSet out;
    for (const auto& t : ts) out.insert(surface(t));
    return out;
}

inline std::vector<SurfaceSet> surface_sets(const Dataset& data) {
    std::vector<SurfaceSet> out;
    out.reserve(data.size());
    for (const auto& s : data) out.push_back(surface_set(s.triplets));
    return out;
}

inline std::vector<SurfaceSet> surface_sets(const std::vector<std::vector<Triplet>>& per_sentence) {
    std::vector<SurfaceSet> out;
    out.reserve(per_sentence.size());
    for (const auto& ts : per_sentence) out.push_back(surface_set(ts));
    return out;
}

namespace detail {

inline std::size_t intersection_size(const SurfaceSet& a, const SurfaceSet& b) {
    std::size_t n = 0;
    for (const auto& t : a) n += b.count(t);
    return n;
}

inline void check_aligned(std::size_t preds, std::size_t golds) {
    if (preds != golds) {
        throw data_error("misaligned evaluation: " + std::to_string(preds) + " prediction rows vs " +
                         std::to_string(golds) + " gold rows");
    }
}

}  // namespace detail

// Micro-averaged over sentences.
inline EvalReport triplet_f1(const std::vector<SurfaceSet>& preds, const std::vector<SurfaceSet>& golds) {
    detail::check_aligned(preds.size(), golds.size());
    std::size_t p = 0, g = 0, c = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        p += preds[i].size();
        g += golds[i].size();
        c += detail::intersection_size(preds[i], golds[i]);
    }
    EvalReport r = EvalReport::from_counts(p, g, c);
    r.sentences = preds.size();
    return r;
}

inline EvalReport triplet_f1(const std::vector<std::vector<Triplet>>& preds, const Dataset& gold) {
    return triplet_f1(surface_sets(preds), surface_sets(gold));
}

// Predictions arrive as a dataset whose rows must match the gold rows by text.
inline EvalReport triplet_f1(const Dataset& preds, const Dataset& gold) {
    detail::check_aligned(preds.size(), gold.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].text != gold[i].text)
            throw data_error("misaligned evaluation: row " + std::to_string(i + 1) + " text differs");
    }
    return triplet_f1(surface_sets(preds), surface_sets(gold));
}

inline const std::vector<std::string>& triplet_count_labels() {
    static const std::vector<std::string> labels{"1", "2", "3", "4", ">4"};
    return labels;
}

// Sentences are bucketed by their (deduplicated) gold triplet count: 1, 2, 3,
// 4 and >4. Sentences without gold triplets fall in no bucket.
inline EvalReport bucket_by_triplet_count(const std::vector<SurfaceSet>& preds, const std::vector<SurfaceSet>& golds) {
    EvalReport overall = triplet_f1(preds, golds);
    const auto& labels = triplet_count_labels();
    std::vector<std::vector<std::size_t>> members(labels.size());
    for (std::size_t i = 0; i < golds.size(); ++i) {
        const std::size_t k = golds[i].size();
        if (k == 0) continue;
        members[std::min<std::size_t>(k, 5) - 1].push_back(i);
    }
    for (std::size_t b = 0; b < labels.size(); ++b) {
        if (members[b].empty()) continue;
        std::vector<SurfaceSet> bp, bg;
        for (std::size_t i : members[b]) {
            bp.push_back(preds[i]);
            bg.push_back(golds[i]);
        }
        overall.buckets.push_back({labels[b], triplet_f1(bp, bg)});
    }
    return overall;
}

inline std::map<SurfaceTriplet, std::size_t> triplet_frequencies(const Dataset& train) {
    std::map<SurfaceTriplet, std::size_t> freq;
    for (const auto& s : train)
        for (const auto& t : s.triplets) ++freq[surface(t)];
    return freq;
}

// Cumulative reoccurrence buckets: bucket k (1..max_k) holds the triplets
// whose frequency in the training set is below k. Predictions are assigned
// by the same rule, so precision is defined within each bucket.
inline EvalReport reoccurrence_buckets(const Dataset& train, const std::vector<SurfaceSet>& preds,
                                       const std::vector<SurfaceSet>& golds, std::size_t max_k = 10) {
    EvalReport overall = triplet_f1(preds, golds);
    const auto freq = triplet_frequencies(train);
    auto f = [&](const SurfaceTriplet& t) {
        auto it = freq.find(t);
        return it == freq.end() ? std::size_t{0} : it->second;
    };
    for (std::size_t k = 1; k <= max_k; ++k) {
        std::vector<SurfaceSet> bp(preds.size()), bg(golds.size());
        for (std::size_t i = 0; i < golds.size(); ++i) {
            for (const auto& t : preds[i])
                if (f(t) < k) bp[i].insert(t);
            for (const auto& t : golds[i])
                if (f(t) < k) bg[i].insert(t);
        }
        overall.buckets.push_back({"<" + std::to_string(k), triplet_f1(bp, bg)});
    }
    return overall;
}

struct AbSplit {
    Dataset train_subset;
    Dataset test_a;  // every triplet occurs in train_subset
    Dataset test_b;  // no triplet occurs in train_subset
    std::size_t dropped = 0;
    std::vector<std::string> warnings;
};

// Samples a seeded sentence subset of train, then partitions test against
// the subset's triplet set. Mixed sentences are dropped and counted.
inline AbSplit ab_split(const Dataset& train, const Dataset& test, std::uint64_t seed, double fraction = 0.6) {
    if (train.empty() || test.empty()) throw data_error("ab_split needs nonempty train and test sets");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw config_error("ab_split fraction must be in (0, 1]");
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size())));
    idx.resize(std::max<std::size_t>(keep, 1));
    std::sort(idx.begin(), idx.end());

    AbSplit out;
    std::set<SurfaceTriplet> seen;
    for (std::size_t i : idx) {
        out.train_subset.push_back(train[i]);
        for (const auto& t : train[i].triplets) seen.insert(surface(t));
    }
    for (const auto& s : test) {
        const SurfaceSet ts = surface_set(s.triplets);
        if (ts.empty()) {
            ++out.dropped;
            continue;
        }
        std::size_t hits = 0;
        for (const auto& t : ts) hits += seen.count(t);
        if (hits == ts.size()) out.test_a.push_back(s);
        else if (hits == 0) out.test_b.push_back(s);
        else ++out.dropped;
    }
    if (out.test_a.empty() || out.test_b.empty()) {
        out.warnings.push_back("degenerate split: test_a=" + std::to_string(out.test_a.size()) +
                               " test_b=" + std::to_string(out.test_b.size()) +
                               " dropped=" + std::to_string(out.dropped));
    }
    return out;
}

// ---- serialisation --------------------------------------------------------

inline const char* kReportCsvHeader = "bucket,predicted,gold,correct,precision,recall,f1";

namespace detail {

inline std::string fixed(double v, int digits = 6) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

inline std::string csv_row(const std::string& label, const EvalReport& r) {
    return label + "," + std::to_string(r.predicted) + "," + std::to_string(r.gold) + "," +
           std::to_string(r.correct) + "," + fixed(r.precision) + "," + fixed(r.recall) + "," + fixed(r.f1);
}

}  // namespace detail

// One row for the overall report ("all") and one per bucket.
inline std::string report_csv(const EvalReport& r) {
    std::string out = std::string(kReportCsvHeader) + "\n" + detail::csv_row("all", r) + "\n";
    for (const auto& [label, b] : r.buckets) out += detail::csv_row(label, b) + "\n";
    return out;
}

inline nlohmann::ordered_json report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["predicted"] = r.predicted;
    j["gold"] = r.gold;
    j["correct"] = r.correct;
    j["sentences"] = r.sentences;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    if (!r.buckets.empty()) {
        nlohmann::ordered_json b = nlohmann::ordered_json::object();
        for (const auto& [label, sub] : r.buckets) b[label] = report_json(sub);
        j["buckets"] = std::move(b);
    }
    return j;
}

inline std::string report_text(const EvalReport& r, const std::string& title = "triplet F1") {
    std::ostringstream os;
    os << title << "\n";
    os << std::left << std::setw(10) << "bucket" << std::right << std::setw(10) << "pred" << std::setw(10) << "gold"
       << std::setw(10) << "correct" << std::setw(8) << "P" << std::setw(8) << "R" << std::setw(8) << "F1" << "\n";
    auto line = [&](const std::string& label, const EvalReport& x) {
        os << std::left << std::setw(10) << label << std::right << std::setw(10) << x.predicted << std::setw(10)
           << x.gold << std::setw(10) << x.correct << std::setw(8) << detail::fixed(x.precision, 3) << std::setw(8)
           << detail::fixed(x.recall, 3) << std::setw(8) << detail::fixed(x.f1, 3) << "\n";
    };
    line("all", r);
    for (const auto& [label, b] : r.buckets) line(label, b);
    return os.str();
}

}  // namespace umt
