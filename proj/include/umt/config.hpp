#pragma once

// Run configuration: a flat "key = value" text file. Blank lines and lines
// starting with '#' are ignored. Every key can also be given on the command
// line as --key VALUE, which overrides the file.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "umt/dataset.hpp"
#include "umt/error.hpp"
#include "umt/flat.hpp"
#include "umt/trainer.hpp"
#include "umt/umtree.hpp"

namespace umt {

struct RunConfig {
    // Paths
    std::string train;
    std::string dev;
    std::string test;
    std::string vocab;
    std::string relations;
    std::string checkpoint;
    std::string out = "run";
    // Model
    std::string model = "umtree";  // umtree | flat
    std::size_t emb_dim = 200;
    std::size_t hidden = 200;
    std::size_t max_len = 100;
    bool truncate = false;
    std::string order = "rth";
    double threshold = 0.5;
    std::size_t max_span_len = 10;
    std::size_t max_d1 = 0;
    std::size_t max_d2 = 10;
    std::size_t max_d3 = 10;
    std::size_t max_decode_len = 50;
    std::string tokenization = "whitespace";
    // Training
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double lr_decay = 1.0;
    double clip_norm = 0.0;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    std::size_t train_eval_every = 0;  // log train-set F1 every N epochs (0 = never)
    double stop_at_train_f1 = 0.0;     // stop once train F1 reaches this (0 = never)

    struct Field {
        std::string key;
        std::string help;
        std::function<void(RunConfig&, const std::string&)> set;
        std::function<std::string(const RunConfig&)> get;
    };

    static const std::vector<Field>& fields();

    void set(const std::string& key, const std::string& value) {
        for (const auto& f : fields()) {
            if (f.key == key) {
                f.set(*this, value);
                return;
            }
        }
        throw config_error("unknown config key '" + key + "'");
    }

    std::string get(const std::string& key) const {
        for (const auto& f : fields())
            if (f.key == key) return f.get(*this);
        throw config_error("unknown config key '" + key + "'");
    }

    // Throws ConfigError on the first invalid value.
    void validate() const {
        if (emb_dim == 0 || hidden == 0) throw config_error("emb_dim and hidden must be positive");
        if (max_len == 0) throw config_error("max_len must be positive");
        if (batch_size == 0) throw config_error("batch_size must be positive");
        if (!(threshold > 0.0 && threshold < 1.0)) throw config_error("threshold must be in (0, 1)");
        if (!(lr > 0.0)) throw config_error("lr must be positive");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw config_error("lr_decay must be in (0, 1]");
        if (clip_norm < 0.0) throw config_error("clip_norm must be non-negative");
        if (stop_at_train_f1 < 0.0 || stop_at_train_f1 > 1.0) throw config_error("stop_at_train_f1 must be in [0, 1]");
        if (model != "umtree" && model != "flat") throw config_error("model must be 'umtree' or 'flat', got '" + model + "'");
        DecodeOrder::parse(order);
        parse_tokenization(tokenization);
    }

    std::string to_text() const {
        std::ostringstream os;
        for (const auto& f : fields()) os << f.key << " = " << f.get(*this) << "\n";
        return os.str();
    }

    static RunConfig parse(std::istream& is, const std::string& source = "<config>") {
        RunConfig cfg;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw parse_error(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
            try {
                cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
            } catch (const Error& e) {
                throw Error(e.kind(), source + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        return cfg;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot open config file '" + path + "'");
        return parse(in, path);
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw io_error("cannot write '" + path + "'");
        out << to_text();
    }

    UMTreeConfig umtree_config() const {
        UMTreeConfig c;
        c.encoder = encoder_config();
        c.order = DecodeOrder::parse(order);
        c.limits.threshold = threshold;
        c.limits.max_span_len = max_span_len;
        c.limits.max_d1 = max_d1;
        c.limits.max_d2 = max_d2;
        c.limits.max_d3 = max_d3;
        c.tokenization = parse_tokenization(tokenization);
        return c;
    }

    FlatConfig flat_config() const {
        FlatConfig c;
        c.encoder = encoder_config();
        c.max_decode_len = max_decode_len;
        c.tokenization = parse_tokenization(tokenization);
        return c;
    }

    EncoderConfig encoder_config() const {
        EncoderConfig e;
        e.emb_dim = emb_dim;
        e.hidden = hidden;
        e.max_len = max_len;
        e.truncate = truncate;
        return e;
    }

    TrainOptions train_options() const {
        TrainOptions o;
        o.epochs = epochs;
        o.batch_size = batch_size;
        o.adam.lr = lr;
        o.lr_decay = lr_decay;
        o.clip_norm = clip_norm;
        o.seed = seed;
        o.jobs = jobs;
        o.train_eval_every = train_eval_every;
        if (stop_at_train_f1 > 0.0) o.stop_at_train_f1 = stop_at_train_f1;
        return o;
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end || v.empty())
        throw config_error("invalid value '" + v + "' for " + key);
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("invalid boolean '" + v + "' for " + key);
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

inline const std::vector<RunConfig::Field>& RunConfig::fields() {
    using F = RunConfig::Field;
#define UMT_STR(name, help)                                                          \
    F { #name, help, [](RunConfig& c, const std::string& v) { c.name = v; },         \
        [](const RunConfig& c) { return c.name; } }
#define UMT_NUM(name, type, help)                                                              \
    F { #name, help, [](RunConfig& c, const std::string& v) { c.name = detail::parse_number<type>(#name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.name); } }
#define UMT_REAL(name, help)                                                                      \
    F { #name, help, [](RunConfig& c, const std::string& v) { c.name = detail::parse_number<double>(#name, v); }, \
        [](const RunConfig& c) { return detail::format_double(c.name); } }
    static const std::vector<F> f{
        UMT_STR(train, "training set (JSONL)"),
        UMT_STR(dev, "development set used for checkpoint selection (JSONL)"),
        UMT_STR(test, "test set (JSONL)"),
        UMT_STR(vocab, "vocabulary file (TSV); built from train when empty"),
        UMT_STR(relations, "relation dictionary (JSON array); built from train when empty"),
        UMT_STR(checkpoint, "model checkpoint to load"),
        UMT_STR(out, "output directory"),
        UMT_STR(model, "umtree or flat"),
        UMT_NUM(emb_dim, std::size_t, "word embedding size"),
        UMT_NUM(hidden, std::size_t, "hidden size"),
        UMT_NUM(max_len, std::size_t, "maximum sentence length in tokens"),
        F{"truncate", "truncate sentences longer than max_len instead of failing",
          [](RunConfig& c, const std::string& v) { c.truncate = detail::parse_bool("truncate", v); },
          [](const RunConfig& c) { return std::string(c.truncate ? "true" : "false"); }},
        UMT_STR(order, "decode order, a permutation of h, r, t"),
        UMT_REAL(threshold, "probability threshold of relation and entity heads"),
        UMT_NUM(max_span_len, std::size_t, "longest entity span in tokens"),
        UMT_NUM(max_d1, std::size_t, "fan-out cap at depth 1 (0 = none)"),
        UMT_NUM(max_d2, std::size_t, "fan-out cap at depth 2 (0 = none)"),
        UMT_NUM(max_d3, std::size_t, "fan-out cap at depth 3 (0 = none)"),
        UMT_NUM(max_decode_len, std::size_t, "flat decoder output length limit"),
        UMT_STR(tokenization, "whitespace or char"),
        UMT_NUM(epochs, std::size_t, "training epochs"),
        UMT_NUM(batch_size, std::size_t, "sentences per Adam step"),
        UMT_REAL(lr, "Adam learning rate"),
        UMT_REAL(lr_decay, "learning rate multiplier applied after every epoch"),
        UMT_REAL(clip_norm, "global gradient norm clip (0 = off)"),
        UMT_NUM(seed, std::uint64_t, "random seed"),
        UMT_NUM(jobs, std::size_t, "threads for evaluation"),
        UMT_NUM(train_eval_every, std::size_t, "log training-set F1 every N epochs (0 = never)"),
        UMT_REAL(stop_at_train_f1, "stop training once training-set F1 reaches this (0 = never)"),
    };
#undef UMT_STR
#undef UMT_NUM
#undef UMT_REAL
    return f;
}

}  // namespace umt
