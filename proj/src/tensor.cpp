#include "durr/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace durr {

namespace {
int g_threads = 0;  // 0 = library default
thread_local bool g_grad_enabled = true;
}  // namespace

void set_num_threads(int n) {
    g_threads = n;
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
}

int num_threads() {
#ifdef _OPENMP
    return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
    return 1;
#endif
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

template <typename T>
void backward(const TensorPtr<T>& loss) {
    if (!loss) throw ValueError("backward: null loss tensor");
    if (!loss->is_scalar())
        throw ValueError("backward requires a scalar loss, got shape " + shape_str(loss->shape));
    if (!loss->has_graph())
        throw ValueError("backward called on a tensor with no recorded graph");

    // iterative post-order DFS; unroll depth can reach thousands of nodes
    std::vector<Tensor<T>*> order;
    std::unordered_set<Tensor<T>*> visited;
    std::vector<std::pair<Tensor<T>*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Tensor<T>* p = node->parents[idx].get();
            ++idx;
            if (!visited.count(p) && p->has_graph()) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->grad_ptr()[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

template <typename T>
GradStore<T> autodiff_backward(const TensorPtr<T>& loss, NetworkParams<T>& params) {
    params.zero_grads();
    backward(loss);
    GradStore<T> store;
    for (const auto& [name, t] : params.entries()) {
        if (t->grad.empty())
            store.entries.emplace_back(name, std::vector<T>(t->data.size(), T(0)));
        else
            store.entries.emplace_back(name, t->grad);
    }
    return store;
}

template struct Tensor<float>;
template struct Tensor<double>;
template void backward<float>(const TensorPtr<float>&);
template void backward<double>(const TensorPtr<double>&);
template class NetworkParams<float>;
template class NetworkParams<double>;
template GradStore<float> autodiff_backward<float>(const TensorPtr<float>&,
                                                   NetworkParams<float>&);
template GradStore<double> autodiff_backward<double>(const TensorPtr<double>&,
                                                     NetworkParams<double>&);

}  // namespace durr
