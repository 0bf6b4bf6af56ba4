#pragma once

// End-to-end runs over a RunConfig: model construction, training with
// on-disk artifacts, prediction files and the decode-order sweep.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "umt/checkpoint.hpp"
#include "umt/config.hpp"
#include "umt/dataset.hpp"
#include "umt/evaluation.hpp"
#include "umt/flat.hpp"
#include "umt/trainer.hpp"
#include "umt/umtree.hpp"
#include "umt/vocab.hpp"

namespace umt {

namespace fs = std::filesystem;

// Loads a dataset, failing on a missing path. Rejected lines are reported
// to `log` and skipped.
inline Dataset load_dataset(const std::string& path, const std::string& role, Tokenization mode,
                            std::ostream* log = nullptr) {
    if (path.empty()) throw config_error("no " + role + " set configured");
    if (!fs::exists(path)) throw io_error(role + " set '" + path + "' does not exist");
    LoadResult r = load_jsonl(path, mode);
    if (log) {
        for (const auto& rej : r.rejects) *log << "warning: " << path << ":" << rej.line << ": " << rej.reason << "\n";
        if (!r.rejects.empty()) *log << "warning: " << r.rejects.size() << " lines rejected from " << path << "\n";
    }
    return std::move(r.data);
}

struct Lexicons {
    Vocab vocab;
    RelationDict relations;
};

// Uses the configured vocabulary and relation files when given, otherwise
// builds both from the training set.
inline Lexicons lexicons_for(const RunConfig& cfg, const Dataset* train) {
    Lexicons lx;
    if (!cfg.vocab.empty()) lx.vocab = Vocab::load(cfg.vocab);
    else if (train) lx.vocab = Vocab::build(*train);
    else throw config_error("no vocab file configured and no training set to build one from");
    if (!cfg.relations.empty()) lx.relations = RelationDict::load(cfg.relations);
    else if (train) lx.relations = RelationDict::from_dataset(*train);
    else throw config_error("no relations file configured and no training set to build one from");
    return lx;
}

// Calls fn with a freshly initialised model of the configured kind.
template <typename Fn>
decltype(auto) with_model(const RunConfig& cfg, const Lexicons& lx, Fn&& fn) {
    cfg.validate();
    if (cfg.model == "flat") {
        FlatSeq2Seq m(cfg.flat_config(), lx.vocab, lx.relations, cfg.seed);
        return fn(m);
    }
    Seq2UMTree m(cfg.umtree_config(), lx.vocab, lx.relations, cfg.seed);
    return fn(m);
}

// Sentences a model can be trained on. The flat decoder drops sentences
// without triplets or with serialisations longer than max_decode_len.
template <TripletModel M>
Dataset trainable(const M& model, const Dataset& data, std::size_t* excluded = nullptr) {
    Dataset out;
    std::size_t dropped = 0;
    for (const auto& s : data) {
        bool ok = !s.tokens.empty();
        if constexpr (std::is_same_v<M, FlatSeq2Seq>) ok = ok && model.target(s).has_value();
        if (ok) out.push_back(s);
        else ++dropped;
    }
    if (excluded) *excluded = dropped;
    return out;
}

inline std::string epoch_checkpoint_name(std::size_t epoch) {
    std::ostringstream os;
    os << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
    return os.str();
}

struct TrainRunResult {
    TrainResult train;
    fs::path best_checkpoint;
    fs::path metrics;
};

// Trains with per-epoch checkpoints under out/checkpoints, a metrics log at
// out/metrics.jsonl (one JSON object per epoch) and out/best.ckpt, the
// checkpoint with the highest dev F1 (the last epoch without a dev set).
template <TripletModel M>
TrainRunResult train_with_artifacts(M& model, const Dataset& train_set, const Dataset* dev, const TrainOptions& opt,
                                    const fs::path& out, std::ostream* log = nullptr) {
    fs::create_directories(out / "checkpoints");
    TrainRunResult res;
    res.metrics = out / "metrics.jsonl";
    res.best_checkpoint = out / "best.ckpt";
    std::ofstream metrics(res.metrics, std::ios::trunc);
    if (!metrics) throw io_error("cannot write '" + res.metrics.string() + "'");
    res.train = train(model, train_set, dev, opt, [&](const EpochMetrics& m, bool improved) {
        metrics << metrics_json(m).dump() << "\n";
        metrics.flush();
        const fs::path ckpt = out / "checkpoints" / epoch_checkpoint_name(m.epoch);
        save_checkpoint(model.params(), ckpt.string());
        if (improved) fs::copy_file(ckpt, res.best_checkpoint, fs::copy_options::overwrite_existing);
        if (log) {
            *log << "epoch " << m.epoch << " loss " << detail::fixed(m.train_loss, 4);
            if (m.dev) *log << " dev_f1 " << detail::fixed(m.dev->f1, 4);
            if (m.train_eval) *log << " train_f1 " << detail::fixed(m.train_eval->f1, 4);
            *log << (improved && m.dev ? " *" : "") << "\n";
        }
    });
    return res;
}

inline void write_predictions(const Dataset& data, const std::vector<std::vector<Triplet>>& preds,
                              const std::string& path) {
    detail::check_aligned(preds.size(), data.size());
    Dataset out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        Sentence s;
        s.text = data[i].text;
        s.tokens = data[i].tokens;
        s.triplets = preds[i];
        out.push_back(std::move(s));
    }
    save_jsonl(out, path);
}

// ---- decode-order sweep ---------------------------------------------------

struct SweepRow {
    std::string order;
    bool ok = false;
    EvalReport report;
    std::string error;
};

// Trains and evaluates one Seq2UMTree per decode order under the same seed
// and hyperparameters. A failing order is recorded and the sweep continues.
inline std::vector<SweepRow> order_sweep(const RunConfig& cfg, const Dataset& train_set, const Dataset& eval_set,
                                         std::ostream* log = nullptr) {
    const Lexicons lx = lexicons_for(cfg, &train_set);
    std::vector<SweepRow> rows;
    for (const DecodeOrder& order : DecodeOrder::all()) {
        SweepRow row;
        row.order = order.name();
        try {
            RunConfig c = cfg;
            c.model = "umtree";
            c.order = order.name();
            c.validate();
            Seq2UMTree model(c.umtree_config(), lx.vocab, lx.relations, c.seed);
            train(model, trainable(model, train_set), nullptr, c.train_options());
            row.report = evaluate(model, eval_set, c.jobs);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        if (log) {
            *log << "order " << row.order << ": "
                 << (row.ok ? "f1 " + detail::fixed(row.report.f1, 4) : "failed: " + row.error) << "\n";
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "order,precision,recall,f1,status\n";
    for (const auto& r : rows) {
        std::string status = r.ok ? "ok" : "error: " + r.error;
        for (char& ch : status)
            if (ch == ',' || ch == '\n') ch = ' ';
        out += r.order + "," + detail::fixed(r.report.precision) + "," + detail::fixed(r.report.recall) + "," +
               detail::fixed(r.report.f1) + "," + status + "\n";
    }
    return out;
}

}  // namespace umt
