#include "durr/optim.hpp"

#include <cmath>

namespace durr {

namespace {

template <typename T>
std::vector<T>& slot(std::vector<std::pair<std::string, std::vector<T>>>& store,
                     const std::string& name, size_t size) {
    for (auto& [n, buf] : store)
        if (n == name) return buf;
    store.emplace_back(name, std::vector<T>(size, T(0)));
    return store.back().second;
}

}  // namespace

template <typename T>
void optimizer_step(NetworkParams<T>& params, const GradStore<T>& grads, OptState<T>& state,
                    OptMethod method, double lr) {
    if (lr <= 0.0) throw ValueError("optimizer_step: learning rate must be positive");
    if (state.empty()) state.method = method;
    if (state.method != method)
        throw ValueError("optimizer_step: state was created for a different method");

    state.step += 1;
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    const double alpha = 0.99, rms_eps = 1e-8;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

    for (auto& [name, t] : params.entries()) {
        const std::vector<T>& g = grads.at(name);
        if (g.size() != t->data.size())
            throw ShapeError("optimizer_step: gradient size mismatch for " + name);
        for (size_t i = 0; i < g.size(); ++i)
            if (!std::isfinite(static_cast<double>(g[i])))
                throw NumericError("optimizer_step: non-finite gradient in parameter " + name);

        T* w = t->data.data();
        if (method == OptMethod::Adam) {
            std::vector<T>& m = slot(state.m, name, g.size());
            std::vector<T>& v = slot(state.v, name, g.size());
            for (size_t i = 0; i < g.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
                const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                w[i] = static_cast<T>(static_cast<double>(w[i]) -
                                      lr * mhat / (std::sqrt(vhat) + adam_eps));
            }
        } else {
            std::vector<T>& v = slot(state.v, name, g.size());
            for (size_t i = 0; i < g.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double vi = alpha * static_cast<double>(v[i]) + (1.0 - alpha) * gi * gi;
                v[i] = static_cast<T>(vi);
                w[i] = static_cast<T>(static_cast<double>(w[i]) -
                                      lr * gi / (std::sqrt(vi) + rms_eps));
            }
        }
    }
}

template struct OptState<float>;
template struct OptState<double>;
template void optimizer_step<float>(NetworkParams<float>&, const GradStore<float>&,
                                    OptState<float>&, OptMethod, double);
template void optimizer_step<double>(NetworkParams<double>&, const GradStore<double>&,
                                     OptState<double>&, OptMethod, double);

}  // namespace durr
