// seq2umtree: train, evaluate and analyse Seq2UMTree triplet extractors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "umt/checkpoint.hpp"
#include "umt/config.hpp"
#include "umt/evaluation.hpp"
#include "umt/gradcheck.hpp"
#include "umt/pipeline.hpp"
#include "umt/synthetic.hpp"

namespace fs = std::filesystem;
using namespace umt;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw io_error("cannot write '" + path.string() + "'");
    os << text;
}

void write_report(const fs::path& dir, const std::string& stem, const EvalReport& r, const std::string& title) {
    write_text(dir / (stem + ".txt"), report_text(r, title));
    write_text(dir / (stem + ".csv"), report_csv(r));
    write_text(dir / (stem + ".json"), report_json(r).dump(2) + "\n");
}

std::string absolute_path(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

// Loads the configured checkpoint into a model built from the configured
// lexicons, then calls fn(model).
template <typename Fn>
void with_trained_model(const RunConfig& cfg, Fn&& fn) {
    if (cfg.checkpoint.empty()) throw config_error("no checkpoint configured");
    if (!fs::exists(cfg.checkpoint)) throw io_error("checkpoint '" + cfg.checkpoint + "' does not exist");
    const Lexicons lx = lexicons_for(cfg, nullptr);
    with_model(cfg, lx, [&](auto& model) {
        load_checkpoint(model.params(), cfg.checkpoint);
        fn(model);
    });
}

// Predictions for `data`, either read from a predictions file or decoded
// by the configured model.
std::vector<std::vector<Triplet>> obtain_predictions(const RunConfig& cfg, const std::string& predictions_path,
                                                     const Dataset& data) {
    if (!predictions_path.empty()) {
        const Tokenization mode = parse_tokenization(cfg.tokenization);
        const Dataset preds = load_dataset(predictions_path, "predictions", mode, &std::cerr);
        detail::check_aligned(preds.size(), data.size());
        std::vector<std::vector<Triplet>> out;
        for (const auto& s : preds) out.push_back(s.triplets);
        return out;
    }
    std::vector<std::vector<Triplet>> out;
    with_trained_model(cfg, [&](const auto& model) { out = predict_all(model, data, cfg.jobs); });
    return out;
}

int cmd_train(const RunConfig& cfg) {
    cfg.validate();
    const Tokenization mode = parse_tokenization(cfg.tokenization);
    const Dataset train_set = load_dataset(cfg.train, "train", mode, &std::cerr);
    Dataset dev;
    if (!cfg.dev.empty()) dev = load_dataset(cfg.dev, "dev", mode, &std::cerr);
    const fs::path out = cfg.out;
    fs::create_directories(out);
    const Lexicons lx = lexicons_for(cfg, &train_set);
    lx.vocab.save((out / "vocab.tsv").string());
    lx.relations.save((out / "relations.json").string());

    // The saved config points at this run's artifacts, so it can be passed
    // straight to evaluate, predict and analyze.
    RunConfig saved = cfg;
    saved.vocab = absolute_path(out / "vocab.tsv");
    saved.relations = absolute_path(out / "relations.json");
    saved.checkpoint = absolute_path(out / "best.ckpt");
    saved.save((out / "config.txt").string());

    with_model(cfg, lx, [&](auto& model) {
        std::size_t excluded = 0;
        const Dataset usable = trainable(model, train_set, &excluded);
        if (excluded) std::cerr << "warning: " << excluded << " training sentences excluded\n";
        const auto res = train_with_artifacts(model, usable, dev.empty() ? nullptr : &dev, cfg.train_options(), out,
                                              &std::cout);
        std::cout << "best epoch " << res.train.best_epoch << " -> " << res.best_checkpoint.string() << "\n";
    });
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& predictions) {
    const Dataset test = load_dataset(cfg.test, "test", parse_tokenization(cfg.tokenization), &std::cerr);
    const EvalReport r = triplet_f1(obtain_predictions(cfg, predictions, test), test);
    fs::create_directories(cfg.out);
    write_report(cfg.out, "report", r, "triplet F1");
    std::cout << report_text(r, "triplet F1");
    return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& input) {
    const std::string path = input.empty() ? cfg.test : input;
    const Dataset data = load_dataset(path, "input", parse_tokenization(cfg.tokenization), &std::cerr);
    std::vector<std::vector<Triplet>> preds;
    with_trained_model(cfg, [&](const auto& model) { preds = predict_all(model, data, cfg.jobs); });
    fs::create_directories(cfg.out);
    const fs::path out = fs::path(cfg.out) / "predictions.jsonl";
    write_predictions(data, preds, out.string());
    std::cout << "wrote " << data.size() << " predictions to " << out.string() << "\n";
    return 0;
}

int cmd_analyze(const RunConfig& cfg, const std::string& predictions) {
    const Tokenization mode = parse_tokenization(cfg.tokenization);
    const Dataset train_set = load_dataset(cfg.train, "train", mode, &std::cerr);
    const Dataset test = load_dataset(cfg.test, "test", mode, &std::cerr);
    const auto preds = surface_sets(obtain_predictions(cfg, predictions, test));
    const auto golds = surface_sets(test);
    const EvalReport counts = bucket_by_triplet_count(preds, golds);
    const EvalReport reocc = reoccurrence_buckets(train_set, preds, golds);
    fs::create_directories(cfg.out);
    write_report(cfg.out, "triplet_count", counts, "by gold triplet count");
    write_report(cfg.out, "reoccurrence", reocc, "by training-set frequency (cumulative, < k)");
    std::cout << report_text(counts, "by gold triplet count") << "\n"
              << report_text(reocc, "by training-set frequency (cumulative, < k)");
    return 0;
}

int cmd_grad_check(const RunConfig& cfg) {
    const auto results = run_gradient_suite(cfg.seed);
    double op_max = 0.0, model_max = 0.0;
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-28s max_rel_err %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                    r.passed() ? "ok" : "FAIL");
        double& worst = r.tolerance <= 1e-4 ? op_max : model_max;
        worst = std::max(worst, r.max_rel_err);
        ok = ok && r.passed();
    }
    std::printf("per-op: max_rel_err %s 1e-4 (observed %.3e)\n", op_max < 1e-4 ? "<" : ">=", op_max);
    std::printf("end-to-end: max_rel_err %s 1e-3 (observed %.3e)\n", model_max < 1e-3 ? "<" : ">=", model_max);
    if (!ok) throw numeric_error("gradient check failed");
    return 0;
}

int cmd_synth(const RunConfig& cfg, SyntheticSpec spec) {
    spec.seed = cfg.seed;
    const SyntheticCorpus c = generate_synthetic(spec);
    const fs::path out = cfg.out;
    fs::create_directories(out);
    save_jsonl(c.train, (out / "train.jsonl").string());
    save_jsonl(c.test, (out / "test.jsonl").string());
    RelationDict(c.relations).save((out / "relations.json").string());
    std::cout << "train " << c.train.size() << " sentences, test " << c.test.size()
              << " sentences, measured overlap " << detail::fixed(measured_overlap(c.train, c.test), 4) << "\n";
    return 0;
}

int cmd_ab_split(const RunConfig& cfg, double fraction) {
    const Tokenization mode = parse_tokenization(cfg.tokenization);
    const Dataset train_set = load_dataset(cfg.train, "train", mode, &std::cerr);
    const Dataset test = load_dataset(cfg.test, "test", mode, &std::cerr);
    const AbSplit s = ab_split(train_set, test, cfg.seed, fraction);
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
    const fs::path out = cfg.out;
    fs::create_directories(out);
    save_jsonl(s.train_subset, (out / "train_subset.jsonl").string());
    save_jsonl(s.test_a, (out / "test_a.jsonl").string());
    save_jsonl(s.test_b, (out / "test_b.jsonl").string());
    std::cout << "train_subset " << s.train_subset.size() << " test_a " << s.test_a.size() << " test_b "
              << s.test_b.size() << " dropped " << s.dropped << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    const Tokenization mode = parse_tokenization(cfg.tokenization);
    const Dataset train_set = load_dataset(cfg.train, "train", mode, &std::cerr);
    const std::string eval_path = cfg.test.empty() ? cfg.dev : cfg.test;
    const Dataset eval_set = load_dataset(eval_path, "test", mode, &std::cerr);
    const auto rows = order_sweep(cfg, train_set, eval_set, &std::cout);
    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "order_sweep.csv", sweep_csv(rows));
    std::cout << sweep_csv(rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Seq2UMTree joint entity and relation extraction"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "run config file (key = value per line)");
    std::map<std::string, std::string> overrides;
    std::map<std::string, CLI::Option*> override_opts;
    for (const auto& f : RunConfig::fields())
        override_opts[f.key] = app.add_option("--" + f.key, overrides[f.key], f.help);

    auto* train = app.add_subcommand("train", "train a model, writing checkpoints and a metrics log to --out");
    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint or a predictions file on the test set");
    auto* predict = app.add_subcommand("predict", "write predictions JSONL for the test set or --input");
    auto* analyze = app.add_subcommand("analyze", "triplet-count and reoccurrence bucket reports");
    auto* grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    auto* ab = app.add_subcommand("ab-split", "split test into seen (A) and unseen (B) triplet sets");
    auto* sweep = app.add_subcommand("sweep", "train and evaluate every decode order");

    std::string predictions, input;
    evaluate->add_option("--predictions", predictions, "predictions JSONL to score instead of decoding");
    analyze->add_option("--predictions", predictions, "predictions JSONL to analyse instead of decoding");
    predict->add_option("--input", input, "dataset to predict (defaults to the test set)");

    SyntheticSpec spec;
    synth->add_option("--vocab-size", spec.vocab_size, "vocabulary size")->capture_default_str();
    synth->add_option("--relation-count", spec.relation_count, "number of relations")->capture_default_str();
    synth->add_option("--train-sentences", spec.train_sentences, "training sentences")->capture_default_str();
    synth->add_option("--test-sentences", spec.test_sentences, "test sentences")->capture_default_str();
    synth->add_option("--min-triplets", spec.min_triplets, "fewest triplets per sentence")->capture_default_str();
    synth->add_option("--max-triplets", spec.max_triplets, "most triplets per sentence")->capture_default_str();
    synth->add_option("--skew", spec.combination_skew, "probability of a skewed relation combination")
        ->capture_default_str();
    synth->add_option("--overlap", spec.overlap, "fraction of test triplets reused from train")->capture_default_str();
    synth->add_option("--max-entity-len", spec.max_entity_len, "longest entity in tokens")->capture_default_str();

    double fraction = 0.6;
    ab->add_option("--fraction", fraction, "fraction of train sentences kept in the subset")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: UsageError: " << e.what() << "\n";
        return 2;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        for (const auto& [key, opt] : override_opts)
            if (opt->count() > 0) cfg.set(key, overrides[key]);
        cfg.validate();

        if (*train) return cmd_train(cfg);
        if (*evaluate) return cmd_evaluate(cfg, predictions);
        if (*predict) return cmd_predict(cfg, input);
        if (*analyze) return cmd_analyze(cfg, predictions);
        if (*grad) return cmd_grad_check(cfg);
        if (*synth) return cmd_synth(cfg, spec);
        if (*ab) return cmd_ab_split(cfg, fraction);
        if (*sweep) return cmd_sweep(cfg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: InternalError: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
