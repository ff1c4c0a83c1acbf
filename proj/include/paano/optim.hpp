#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "paano/tensor.hpp"

namespace paano {

// AdamW moments and step counts, one slot per parameter tensor in the order
// the tensors are passed to adamw_step.
template <class Real>
struct OptimizerState {
    double base_lr = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<Real>> first_moment;
    std::vector<std::vector<Real>> second_moment;
    std::vector<std::int64_t> param_steps;
};

// Decoupled weight decay followed by a bias-corrected Adam update. Tensors
// without a gradient are left untouched, moments and step count included.
template <class Real>
void adamw_step(std::span<Tensor<Real>* const> params, OptimizerState<Real>& state, double lr) {
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        state.param_steps.assign(params.size(), 0);
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(params[i]->size(), Real(0));
            state.second_moment[i].assign(params[i]->size(), Real(0));
        }
    }
    if (state.first_moment.size() != params.size()) throw ShapeError("adamw: parameter count changed between steps");
    ++state.step;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<Real>& p = *params[i];
        if (!p.grad) continue;
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != p.size()) throw ShapeError("adamw: moment buffer does not match parameter shape");
        const std::int64_t t = ++state.param_steps[i];
        const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
        const double decay = 1.0 - lr * state.weight_decay;
        const auto& g = *p.grad;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            m[j] = static_cast<Real>(mj);
            v[j] = static_cast<Real>(vj);
            const double m_hat = static_cast<double>(m[j]) / bc1;
            const double v_hat = static_cast<double>(v[j]) / bc2;
            const double decayed = p.data[j] * decay;
            p.data[j] = static_cast<Real>(decayed - lr * m_hat / (std::sqrt(v_hat) + state.eps));
        }
    }
}

// Cosine annealing from lr0 at iter = 0 to lr0 / 10 at iter = total.
inline double cosine_lr(std::int64_t iter, std::int64_t total, double lr0) {
    const double lr_min = lr0 / 10.0;
    if (total <= 0) return lr0;
    const double phase = static_cast<double>(iter) / static_cast<double>(total);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

}  // namespace paano
