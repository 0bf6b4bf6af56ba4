#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "umt/adam.hpp"
#include "umt/dataset.hpp"
#include "umt/evaluation.hpp"
#include "umt/nn.hpp"
#include "umt/tensor.hpp"

namespace umt {

// Anything with trainable parameters, a per-sentence loss, and a decoder.
template <typename M>
concept TripletModel = requires(M& m, const M& cm, const Sentence& s) {
    { m.params() } -> std::same_as<ParameterSet&>;
    { cm.loss(s) } -> std::same_as<Tensor>;
    { cm.predict(s) } -> std::same_as<std::vector<Triplet>>;
};

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    AdamConfig adam;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
    double lr_decay = 1.0;   // learning rate is multiplied by this after every epoch
    // Train-set F1 is evaluated every train_eval_every epochs and on the last
    // epoch; 0 disables it. Training stops once an evaluated F1 reaches
    // stop_at_train_f1.
    std::size_t train_eval_every = 0;
    std::optional<double> stop_at_train_f1;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean per-sentence loss over the epoch
    std::optional<EvalReport> dev;
    std::optional<EvalReport> train_eval;
    double wall_seconds = 0.0;
};

inline nlohmann::ordered_json metrics_json(const EpochMetrics& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["train_loss"] = m.train_loss;
    if (m.dev) {
        j["dev_precision"] = m.dev->precision;
        j["dev_recall"] = m.dev->recall;
        j["dev_f1"] = m.dev->f1;
    } else {
        j["dev_precision"] = nullptr;
        j["dev_recall"] = nullptr;
        j["dev_f1"] = nullptr;
    }
    if (m.train_eval) j["train_f1"] = m.train_eval->f1;
    j["wall_seconds"] = m.wall_seconds;
    return j;
}

struct TrainResult {
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;
    double best_dev_f1 = -1.0;
    std::size_t skipped = 0;  // sentences whose loss could not be built
};

// Decodes every sentence; sentences are split across `jobs` threads that
// only read the parameters.
template <TripletModel M>
std::vector<std::vector<Triplet>> predict_all(const M& model, const Dataset& data, std::size_t jobs = 1) {
    std::vector<std::vector<Triplet>> out(data.size());
    jobs = std::max<std::size_t>(1, std::min(jobs, data.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.predict(data[i]);
        return out;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < data.size(); i += jobs) out[i] = model.predict(data[i]);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

template <TripletModel M>
EvalReport evaluate(const M& model, const Dataset& data, std::size_t jobs = 1) {
    return triplet_f1(predict_all(model, data, jobs), data);
}

inline void clip_gradients(ParameterSet& params, double max_norm) {
    double sq = 0.0;
    for (auto& p : params.items())
        for (double g : p.tensor.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (auto& p : params.items())
        for (double& g : p.tensor.mutable_grad()) g *= s;
}

// Mini-batch Adam over per-sentence losses. The batch loss is the mean of
// the sentence losses. The shuffle is seeded, so a fixed seed and config
// reproduce the same parameter trajectory.
//
// on_epoch(metrics, improved) runs after every epoch; `improved` is true when
// dev F1 beat every earlier epoch (or, without a dev set, on every epoch).
template <TripletModel M>
TrainResult train(M& model, const Dataset& train_set, const Dataset* dev, const TrainOptions& opt,
                  const std::function<void(const EpochMetrics&, bool)>& on_epoch = {}) {
    if (train_set.empty()) throw data_error("training set is empty");
    if (opt.batch_size == 0) throw config_error("batch_size must be positive");
    ParameterSet& params = model.params();
    AdamState adam(params, opt.adam);
    Rng shuffle_rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    TrainResult result;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        adam.config.lr = opt.adam.lr * std::pow(opt.lr_decay, static_cast<double>(epoch - 1));
        double total = 0.0;
        std::size_t counted = 0;
        params.zero_grad();
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t stop = std::min(order.size(), start + opt.batch_size);
            const double weight = 1.0 / static_cast<double>(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                Tensor loss = model.loss(train_set[order[k]]);
                total += loss.item();
                ++counted;
                backward(loss, weight);
            }
            if (opt.clip_norm > 0.0) clip_gradients(params, opt.clip_norm);
            adam_step(params, adam);
            params.zero_grad();
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = counted ? total / static_cast<double>(counted) : 0.0;
        if (dev && !dev->empty()) m.dev = evaluate(model, *dev, opt.jobs);
        const std::size_t every = opt.train_eval_every ? opt.train_eval_every : opt.stop_at_train_f1 ? 1 : 0;
        const bool eval_train = every != 0 && (epoch % every == 0 || epoch == opt.epochs);
        if (eval_train) m.train_eval = evaluate(model, train_set, opt.jobs);
        m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        bool improved = true;
        if (m.dev) {
            improved = m.dev->f1 > result.best_dev_f1;
            if (improved) {
                result.best_dev_f1 = m.dev->f1;
                result.best_epoch = epoch;
            }
        } else {
            result.best_epoch = epoch;
        }
        result.history.push_back(m);
        if (on_epoch) on_epoch(m, improved);
        if (eval_train && opt.stop_at_train_f1 && m.train_eval->f1 >= *opt.stop_at_train_f1) break;
    }
    return result;
}

}  // namespace umt
