#pragma once

// Dense row-major 2-D tensors with tape-free reverse-mode differentiation.
// Every tensor is a matrix; vectors are 1 x n rows and scalars are 1 x 1.
// Results keep shared ownership of their inputs, so a graph lives exactly as
// long as the tensors that reference it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "umt/error.hpp"

namespace umt {

namespace detail {
inline thread_local bool grad_mode = true;
}

inline bool grad_enabled() { return detail::grad_mode; }

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
    ~NoGradGuard() { detail::grad_mode = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        node_->rows = rows;
        node_->cols = cols;
        node_->value.assign(rows * cols, fill);
        node_->requires_grad = requires_grad;
    }

    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false) {
        if (values.size() != rows * cols) {
            throw dimension_error("tensor of shape [" + std::to_string(rows) + "x" +
                                  std::to_string(cols) + "] cannot hold " +
                                  std::to_string(values.size()) + " values");
        }
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->rows = rows;
        t.node_->cols = cols;
        t.node_->value = std::move(values);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor row_vector(std::vector<double> values, bool requires_grad = false) {
        const auto n = values.size();
        return from(1, n, std::move(values), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from(1, 1, {v}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t size() const { return node_->value.size(); }
    std::vector<std::size_t> shape() const { return {node_->rows, node_->cols}; }

    std::string shape_string() const {
        return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]";
    }

    std::span<const double> values() const { return node_->value; }
    // Direct writes are meant for parameter initialisation and optimiser updates.
    std::span<double> mutable_values() { return node_->value; }

    double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }

    double item() const {
        if (size() != 1) throw dimension_error("item() on tensor of shape " + shape_string());
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor make_result(std::size_t rows, std::size_t cols,
                          std::initializer_list<const Tensor*> inputs) {
    Tensor out(rows, cols);
    if (!grad_mode) return out;
    bool needs = false;
    for (const Tensor* in : inputs) needs = needs || in->requires_grad();
    if (!needs) return out;
    Node* n = out.node();
    n->requires_grad = true;
    for (const Tensor* in : inputs) n->parents.push_back(in->shared());
    return out;
}

inline Tensor make_result(std::size_t rows, std::size_t cols, std::span<const Tensor> inputs) {
    Tensor out(rows, cols);
    if (!grad_mode) return out;
    bool needs = false;
    for (const Tensor& in : inputs) needs = needs || in.requires_grad();
    if (!needs) return out;
    Node* n = out.node();
    n->requires_grad = true;
    for (const Tensor& in : inputs) n->parents.push_back(in.shared());
    return out;
}

inline bool tracks(const Tensor& t) { return t.node()->requires_grad; }

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                     double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA[m x k] += dC[m x n] * B^T
inline void gemm_acc_bt(std::size_t m, std::size_t k, std::size_t n, const double* dc,
                        const double* b, double* da) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* dcrow = dc + i * n;
        double* darow = da + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += dcrow[j] * brow[j];
            darow[p] += s;
        }
    }
}

// dB[k x n] += A^T * dC[m x n]
inline void gemm_acc_at(std::size_t m, std::size_t k, std::size_t n, const double* a,
                        const double* dc, double* db) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* dcrow = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* dbrow = db + p * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
        }
    }
}

inline double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

// Reverse pass from a scalar. Gradients accumulate into every reachable
// tensor that requires them until zero_grad() is called.
inline void backward(const Tensor& loss, double seed = 1.0) {
    if (loss.size() != 1) {
        throw dimension_error("backward() needs a scalar loss, got shape " + loss.shape_string());
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS over the nodes that require gradients.
    std::vector<Node*> order;
    std::vector<std::pair<Node*, std::size_t>> stack;
    std::unordered_set<Node*> visited;
    auto is_visited = [&](Node* n) { return visited.count(n) != 0; };
    auto mark = [&](Node* n) { visited.insert(n); };

    Node* root = loss.node();
    mark(root);
    stack.emplace_back(root, 0);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !is_visited(p)) {
                mark(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw dimension_error("matmul: inner dimensions differ, " + a.shape_string() + " x " +
                              b.shape_string());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = detail::make_result(m, n, {&a, &b});
    detail::gemm_acc(m, k, n, a.values().data(), b.values().data(), out.mutable_values().data());
    if (detail::tracks(out)) {
        Node* an = a.node();
        Node* bn = b.node();
        out.node()->backward_fn = [an, bn, m, k, n](Node& self) {
            if (an->requires_grad)
                detail::gemm_acc_bt(m, k, n, self.grad.data(), bn->value.data(), an->ensure_grad().data());
            if (bn->requires_grad)
                detail::gemm_acc_at(m, k, n, an->value.data(), self.grad.data(), bn->ensure_grad().data());
        };
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = detail::make_result(n, m, {&a});
    auto ov = out.mutable_values();
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ov[j * m + i] = av[i * n + j];
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an, m, n](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
        };
    }
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw dimension_error("add: shapes differ, " + a.shape_string() + " vs " + b.shape_string());
    }
    Tensor out = detail::make_result(a.rows(), a.cols(), {&a, &b});
    auto ov = out.mutable_values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (detail::tracks(out)) {
        Node* an = a.node();
        Node* bn = b.node();
        out.node()->backward_fn = [an, bn](Node& self) {
            for (Node* p : {an, bn}) {
                if (!p->requires_grad) continue;
                auto& g = p->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        };
    }
    return out;
}

// a[m x n] + bias[1 x n], bias broadcast over rows.
inline Tensor add_row(const Tensor& a, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw dimension_error("add_row: bias " + bias.shape_string() + " does not broadcast over " +
                              a.shape_string());
    }
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = detail::make_result(m, n, {&a, &bias});
    auto ov = out.mutable_values();
    auto av = a.values();
    auto bv = bias.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = av[i * n + j] + bv[j];
    if (detail::tracks(out)) {
        Node* an = a.node();
        Node* bn = bias.node();
        out.node()->backward_fn = [an, bn, m, n](Node& self) {
            if (an->requires_grad) {
                auto& g = an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
            }
        };
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw dimension_error("mul: shapes differ, " + a.shape_string() + " vs " + b.shape_string());
    }
    Tensor out = detail::make_result(a.rows(), a.cols(), {&a, &b});
    auto ov = out.mutable_values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (detail::tracks(out)) {
        Node* an = a.node();
        Node* bn = b.node();
        out.node()->backward_fn = [an, bn](Node& self) {
            if (an->requires_grad) {
                auto& g = an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
            }
        };
    }
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {&a});
    auto ov = out.mutable_values();
    auto av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an, s](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
        };
    }
    return out;
}

inline Tensor sigmoid(const Tensor& a) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {&a});
    auto ov = out.mutable_values();
    auto av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = detail::stable_sigmoid(av[i]);
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double y = self.value[i];
                g[i] += self.grad[i] * y * (1.0 - y);
            }
        };
    }
    return out;
}

inline Tensor tanh(const Tensor& a) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {&a});
    auto ov = out.mutable_values();
    auto av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(av[i]);
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double y = self.value[i];
                g[i] += self.grad[i] * (1.0 - y * y);
            }
        };
    }
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {&a});
    auto ov = out.mutable_values();
    auto av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (an->value[i] > 0.0) g[i] += self.grad[i];
        };
    }
    return out;
}

inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.cols()) {
        throw dimension_error("slice_cols: columns [" + std::to_string(begin) + ", " +
                              std::to_string(begin + count) + ") out of range for " +
                              a.shape_string());
    }
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = detail::make_result(m, count, {&a});
    auto ov = out.mutable_values();
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i * n + begin), count,
                    ov.begin() + static_cast<std::ptrdiff_t>(i * count));
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an, m, n, begin, count](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += self.grad[i * count + j];
        };
    }
    return out;
}

inline Tensor row(const Tensor& a, std::size_t index) {
    if (index >= a.rows()) {
        throw dimension_error("row: index " + std::to_string(index) + " out of range for " +
                              a.shape_string());
    }
    const std::size_t n = a.cols();
    Tensor out = detail::make_result(1, n, {&a});
    auto av = a.values();
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(index * n), n, out.mutable_values().begin());
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an, index, n](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t j = 0; j < n; ++j) g[index * n + j] += self.grad[j];
        };
    }
    return out;
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw dimension_error("concat_cols: row counts differ, " + a.shape_string() + " vs " +
                              b.shape_string());
    }
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
    Tensor out = detail::make_result(m, n, {&a, &b});
    auto ov = out.mutable_values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i * na), na,
                    ov.begin() + static_cast<std::ptrdiff_t>(i * n));
        std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(i * nb), nb,
                    ov.begin() + static_cast<std::ptrdiff_t>(i * n + na));
    }
    if (detail::tracks(out)) {
        Node* an = a.node();
        Node* bn = b.node();
        out.node()->backward_fn = [an, bn, m, na, nb, n](Node& self) {
            if (an->requires_grad) {
                auto& g = an->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < na; ++j) g[i * na + j] += self.grad[i * n + j];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < nb; ++j) g[i * nb + j] += self.grad[i * n + na + j];
            }
        };
    }
    return out;
}

// Stacks 1 x c rows into an n x c matrix.
inline Tensor stack_rows(std::span<const Tensor> rows_in) {
    if (rows_in.empty()) throw dimension_error("stack_rows: no rows given");
    const std::size_t n = rows_in.size(), c = rows_in.front().cols();
    for (const Tensor& r : rows_in) {
        if (r.rows() != 1 || r.cols() != c) {
            throw dimension_error("stack_rows: expected [1x" + std::to_string(c) + "], got " +
                                  r.shape_string());
        }
    }
    Tensor out = detail::make_result(n, c, rows_in);
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(rows_in[i].values().begin(), c, ov.begin() + static_cast<std::ptrdiff_t>(i * c));
    if (detail::tracks(out)) {
        out.node()->backward_fn = [c](Node& self) {
            for (std::size_t i = 0; i < self.parents.size(); ++i) {
                Node* p = self.parents[i].get();
                if (!p->requires_grad) continue;
                auto& g = p->ensure_grad();
                for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
            }
        };
    }
    return out;
}

inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
    const std::size_t c = table.cols();
    for (std::size_t id : ids) {
        if (id >= table.rows()) {
            throw dimension_error("gather_rows: id " + std::to_string(id) + " out of range for table " +
                                  table.shape_string());
        }
    }
    Tensor out = detail::make_result(ids.size(), c, {&table});
    auto ov = out.mutable_values();
    auto tv = table.values();
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * c), c,
                    ov.begin() + static_cast<std::ptrdiff_t>(i * c));
    if (detail::tracks(out)) {
        Node* tn = table.node();
        std::vector<std::size_t> idx(ids.begin(), ids.end());
        out.node()->backward_fn = [tn, idx = std::move(idx), c](Node& self) {
            auto& g = tn->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
        };
    }
    return out;
}

inline Tensor repeat_rows(const Tensor& a, std::size_t times) {
    if (a.rows() != 1) throw dimension_error("repeat_rows: expected a row vector, got " + a.shape_string());
    const std::size_t c = a.cols();
    Tensor out = detail::make_result(times, c, {&a});
    auto ov = out.mutable_values();
    auto av = a.values();
    for (std::size_t i = 0; i < times; ++i)
        std::copy(av.begin(), av.end(), ov.begin() + static_cast<std::ptrdiff_t>(i * c));
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an, times, c](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < times; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
        };
    }
    return out;
}

// Column-wise maximum over the sequence (row) axis. Ties go to the lowest row.
inline Tensor max_over_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (m == 0) throw dimension_error("max_over_rows: empty sequence");
    Tensor out = detail::make_result(1, n, {&a});
    auto ov = out.mutable_values();
    auto av = a.values();
    std::vector<std::size_t> arg(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        double best = av[j];
        for (std::size_t i = 1; i < m; ++i) {
            if (av[i * n + j] > best) {
                best = av[i * n + j];
                arg[j] = i;
            }
        }
        ov[j] = best;
    }
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an, arg = std::move(arg), n](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t j = 0; j < n; ++j) g[arg[j] * n + j] += self.grad[j];
        };
    }
    return out;
}

// Softmax applied independently to each row.
inline Tensor softmax_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = detail::make_result(m, n, {&a});
    auto ov = out.mutable_values();
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = av.data() + i * n;
        double* y = ov.data() + i * n;
        const double mx = *std::max_element(x, x + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < n; ++j) y[j] /= z;
    }
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an, m, n](Node& self) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* y = self.value.data() + i * n;
                const double* dy = self.grad.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (dy[j] - dot);
            }
        };
    }
    return out;
}

// Same-padded 1-D convolution along the sequence axis.
// weight: [width * d_in x d_out], rows grouped by kernel offset; bias: [1 x d_out].
inline Tensor conv1d_same(const Tensor& seq, const Tensor& weight, const Tensor& bias,
                          std::size_t width) {
    const std::size_t n = seq.rows(), din = seq.cols(), dout = weight.cols();
    if (n == 0) throw dimension_error("conv1d_same: empty sequence");
    if (width == 0 || width % 2 == 0) throw dimension_error("conv1d_same: kernel width must be odd");
    if (weight.rows() != width * din) {
        throw dimension_error("conv1d_same: weight " + weight.shape_string() + " does not match input " +
                              seq.shape_string() + " with width " + std::to_string(width));
    }
    if (bias.rows() != 1 || bias.cols() != dout) {
        throw dimension_error("conv1d_same: bias " + bias.shape_string() + " does not match weight " +
                              weight.shape_string());
    }
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(width / 2);
    Tensor out = detail::make_result(n, dout, {&seq, &weight, &bias});
    auto ov = out.mutable_values();
    const double* x = seq.values().data();
    const double* w = weight.values().data();
    const double* b = bias.values().data();
    for (std::size_t i = 0; i < n; ++i) std::copy_n(b, dout, ov.data() + i * dout);
    for (std::size_t k = 0; k < width; ++k) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
        const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t hi = shift > 0 ? n - std::min(n, static_cast<std::size_t>(shift)) : n;
        if (lo >= hi) continue;
        detail::gemm_acc(hi - lo, din, dout, x + (lo + shift) * din, w + k * din * dout,
                         ov.data() + lo * dout);
    }
    if (detail::tracks(out)) {
        Node* sn = seq.node();
        Node* wn = weight.node();
        Node* bn = bias.node();
        out.node()->backward_fn = [sn, wn, bn, n, din, dout, width, pad](Node& self) {
            const double* dy = self.grad.data();
            for (std::size_t k = 0; k < width; ++k) {
                const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
                const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                const std::size_t hi = shift > 0 ? n - std::min(n, static_cast<std::size_t>(shift)) : n;
                if (lo >= hi) continue;
                if (sn->requires_grad)
                    detail::gemm_acc_bt(hi - lo, din, dout, dy + lo * dout, wn->value.data() + k * din * dout,
                                        sn->ensure_grad().data() + (lo + shift) * din);
                if (wn->requires_grad)
                    detail::gemm_acc_at(hi - lo, din, dout, sn->value.data() + (lo + shift) * din,
                                        dy + lo * dout, wn->ensure_grad().data() + k * din * dout);
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < dout; ++j) g[j] += dy[i * dout + j];
            }
        };
    }
    return out;
}

inline Tensor sum(const Tensor& a) {
    Tensor out = detail::make_result(1, 1, {&a});
    double s = 0.0;
    for (double v : a.values()) s += v;
    out.mutable_values()[0] = s;
    if (detail::tracks(out)) {
        Node* an = a.node();
        out.node()->backward_fn = [an](Node& self) {
            auto& g = an->ensure_grad();
            for (double& v : g) v += self.grad[0];
        };
    }
    return out;
}

// Sum of scalars, in the given order.
inline Tensor add_scalars(std::span<const Tensor> terms) {
    for (const Tensor& t : terms) {
        if (t.size() != 1) throw dimension_error("add_scalars: term of shape " + t.shape_string());
    }
    Tensor out = detail::make_result(1, 1, terms);
    double s = 0.0;
    for (const Tensor& t : terms) s += t.values()[0];
    out.mutable_values()[0] = s;
    if (detail::tracks(out)) {
        out.node()->backward_fn = [](Node& self) {
            for (auto& p : self.parents)
                if (p->requires_grad) p->ensure_grad()[0] += self.grad[0];
        };
    }
    return out;
}

inline constexpr double kProbClamp = 1e-7;

// Summed binary cross-entropy between probabilities and {0,1} targets.
// Probabilities are clamped to [1e-7, 1 - 1e-7]; clamped entries pass no gradient.
inline Tensor bce_sum(const Tensor& probs, std::span<const double> targets) {
    if (targets.size() != probs.size()) {
        throw dimension_error("bce_sum: " + std::to_string(targets.size()) + " targets for probabilities " +
                              probs.shape_string());
    }
    Tensor out = detail::make_result(1, 1, {&probs});
    auto pv = probs.values();
    double loss = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double p = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
        loss -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
    }
    out.mutable_values()[0] = loss;
    if (detail::tracks(out)) {
        Node* pn = probs.node();
        std::vector<double> y(targets.begin(), targets.end());
        out.node()->backward_fn = [pn, y = std::move(y)](Node& self) {
            auto& g = pn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double p = pn->value[i];
                if (p < kProbClamp || p > 1.0 - kProbClamp) continue;
                g[i] += self.grad[0] * (-y[i] / p + (1.0 - y[i]) / (1.0 - p));
            }
        };
    }
    return out;
}

// -log softmax(logits)[target] for a single 1 x V row of logits.
inline Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target) {
    if (logits.rows() != 1 || target >= logits.cols()) {
        throw dimension_error("softmax_cross_entropy: target " + std::to_string(target) +
                              " invalid for logits " + logits.shape_string());
    }
    const std::size_t n = logits.cols();
    auto lv = logits.values();
    const double mx = *std::max_element(lv.begin(), lv.end());
    std::vector<double> p(n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (p[j] = std::exp(lv[j] - mx));
    for (double& v : p) v /= z;
    Tensor out = detail::make_result(1, 1, {&logits});
    out.mutable_values()[0] = -(lv[target] - mx - std::log(z));
    if (detail::tracks(out)) {
        Node* ln = logits.node();
        out.node()->backward_fn = [ln, p = std::move(p), target](Node& self) {
            auto& g = ln->ensure_grad();
            for (std::size_t j = 0; j < p.size(); ++j)
                g[j] += self.grad[0] * (p[j] - (j == target ? 1.0 : 0.0));
        };
    }
    return out;
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace umt
