#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "umt/error.hpp"
#include "umt/nn.hpp"

namespace umt {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    AdamState() = default;
    AdamState(const ParameterSet& params, AdamConfig cfg) : config(cfg) {
        for (const auto& p : params.items()) {
            m.emplace_back(p.tensor.size(), 0.0);
            v.emplace_back(p.tensor.size(), 0.0);
        }
    }
};

// One bias-corrected Adam update over every parameter. Parameters that never
// received a gradient are treated as having a zero gradient. Throws
// NumericError naming the first parameter with a non-finite gradient, before
// anything is modified.
inline void adam_step(ParameterSet& params, AdamState& state) {
    auto& items = params.items();
    if (items.size() != state.m.size()) {
        throw dimension_error("adam_step: optimiser tracks " + std::to_string(state.m.size()) +
                              " parameters, model has " + std::to_string(items.size()));
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (state.m[i].size() != items[i].tensor.size()) {
            throw dimension_error("adam_step: moment shape mismatch for '" + items[i].name + "'");
        }
        if (items[i].tensor.has_grad() && !all_finite(items[i].tensor.grad())) {
            throw numeric_error("non-finite gradient in parameter '" + items[i].name + "'");
        }
    }

    ++state.step;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(c.beta1, t);
    const double correct2 = 1.0 - std::pow(c.beta2, t);

    for (std::size_t i = 0; i < items.size(); ++i) {
        Tensor& param = items[i].tensor;
        auto values = param.mutable_values();
        const bool has = param.has_grad();
        auto grad = param.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = has ? grad[j] : 0.0;
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
            const double mhat = m[j] / correct1;
            const double vhat = v[j] / correct2;
            values[j] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    }
}

}  // namespace umt
