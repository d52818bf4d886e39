#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "durr/common.hpp"

namespace durr {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Reverse-mode autodiff over a per-forward tape. Each op that runs under an
// enabled GradMode with at least one grad-requiring input records a node:
// the output keeps shared_ptr links to its parents plus a closure that
// accumulates into the parents' grad buffers. backward() walks the graph in
// reverse topological order. First order only.
template <typename T>
struct Tensor : std::enable_shared_from_this<Tensor<T>> {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated on demand, same length as data
    bool requires_grad = false;

    std::vector<std::shared_ptr<Tensor<T>>> parents;
    std::function<void()> backward_fn;  // empty for leaves

    Tensor(Shape s, std::vector<T> d, bool req_grad)
        : shape(std::move(s)), data(std::move(d)), requires_grad(req_grad) {
        if (static_cast<int64_t>(data.size()) != numel(shape))
            throw ShapeError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    T* grad_ptr() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad.data();
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }

    bool is_scalar() const { return size() == 1; }
    bool has_graph() const { return !parents.empty(); }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
    return std::make_shared<Tensor<T>>(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
TensorPtr<T> zeros(const Shape& shape, bool requires_grad = false) {
    return make_tensor<T>(shape, std::vector<T>(static_cast<size_t>(numel(shape)), T(0)),
                          requires_grad);
}

template <typename T>
TensorPtr<T> full(const Shape& shape, T value, bool requires_grad = false) {
    return make_tensor<T>(shape, std::vector<T>(static_cast<size_t>(numel(shape)), value),
                          requires_grad);
}

template <typename T>
TensorPtr<T> randn(const Shape& shape, Rng& rng, double stddev = 1.0,
                   bool requires_grad = false) {
    std::vector<T> d(static_cast<size_t>(numel(shape)));
    for (auto& v : d) v = static_cast<T>(rng.normal(0.0, stddev));
    return make_tensor<T>(shape, std::move(d), requires_grad);
}

// Grad recording mode, thread local. Disabled during inference so forward
// passes build no graph.
struct GradMode {
    static bool enabled();
    static void set(bool on);
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Runs reverse-mode accumulation from a scalar loss. Throws on a non-scalar
// loss or a loss with no recorded graph behind it.
template <typename T>
void backward(const TensorPtr<T>& loss);

// Named parameter collection, insertion ordered. The arch descriptor string
// identifies what built it (checked when loading checkpoints).
template <typename T>
class NetworkParams {
public:
    void add(const std::string& name, TensorPtr<T> t) {
        if (index_.count(name)) throw ValueError("duplicate parameter name: " + name);
        index_[name] = entries_.size();
        entries_.push_back({name, std::move(t)});
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const TensorPtr<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValueError("unknown parameter: " + name);
        return entries_[it->second].second;
    }

    TensorPtr<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValueError("unknown parameter: " + name);
        return entries_[it->second].second;
    }

    const std::vector<std::pair<std::string, TensorPtr<T>>>& entries() const { return entries_; }
    size_t count() const { return entries_.size(); }

    int64_t parameter_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : entries_) n += t->size();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : entries_) t->zero_grad();
    }

    void set_requires_grad(bool on) {
        for (auto& [name, t] : entries_) t->requires_grad = on;
    }

    std::string arch;

private:
    std::vector<std::pair<std::string, TensorPtr<T>>> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Gradient snapshot keyed like the parameter set.
template <typename T>
struct GradStore {
    std::vector<std::pair<std::string, std::vector<T>>> entries;

    const std::vector<T>& at(const std::string& name) const {
        for (const auto& [n, g] : entries)
            if (n == name) return g;
        throw ValueError("no gradient recorded for: " + name);
    }
};

// Backprops from `loss` and collects per-parameter gradients. Parameters the
// loss never touched come back as zeros.
template <typename T>
GradStore<T> autodiff_backward(const TensorPtr<T>& loss, NetworkParams<T>& params);

// Deep copy (fresh tensors, no recorded graph).
template <typename T>
NetworkParams<T> clone_params(const NetworkParams<T>& src) {
    NetworkParams<T> out;
    out.arch = src.arch;
    for (const auto& [name, t] : src.entries())
        out.add(name, make_tensor<T>(t->shape, t->data, t->requires_grad));
    return out;
}

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template void backward<float>(const TensorPtr<float>&);
extern template void backward<double>(const TensorPtr<double>&);
extern template class NetworkParams<float>;
extern template class NetworkParams<double>;
extern template GradStore<float> autodiff_backward<float>(const TensorPtr<float>&,
                                                          NetworkParams<float>&);
extern template GradStore<double> autodiff_backward<double>(const TensorPtr<double>&,
                                                            NetworkParams<double>&);

}  // namespace durr
