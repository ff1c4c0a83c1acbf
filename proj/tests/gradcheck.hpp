#pragma once

// Central-difference gradient checking shared by the kernel and model tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "paano/tensor.hpp"

template <class Real>
struct GradTolerance;
template <>
struct GradTolerance<float> {
    static constexpr double step = 1e-3;
    static constexpr double max_rel = 1e-3;
};
template <>
struct GradTolerance<double> {
    static constexpr double step = 1e-6;
    static constexpr double max_rel = 1e-6;
};

// d loss / d data[i] by central differences. The step actually taken is
// measured after rounding to Real so 32-bit inputs are not biased.
template <class Real, class Loss>
std::vector<double> numeric_gradient(Real* data, std::size_t n, Loss&& loss) {
    const double h = GradTolerance<Real>::step;
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Real saved = data[i];
        const Real up = static_cast<Real>(saved + h);
        const Real down = static_cast<Real>(saved - h);
        data[i] = up;
        const double lp = loss();
        data[i] = down;
        const double lm = loss();
        data[i] = saved;
        g[i] = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
    }
    return g;
}

// ||a - n|| / max(||a||, ||n||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
    double diff = 0.0;
    double na = 0.0;
    double nn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - n[i]) * (a[i] - n[i]);
        na += a[i] * a[i];
        nn += n[i] * n[i];
    }
    const double scale = std::sqrt(std::max(na, nn));
    return scale < 1e-300 ? 0.0 : std::sqrt(diff) / scale;
}

template <class Real>
std::vector<double> to_double(const Real* p, std::size_t n) {
    return std::vector<double>(p, p + n);
}

// Sum of r_i * out_i accumulated in double: a linear probe of a kernel output.
template <class Real>
double probe(const paano::Matrix<Real>& out, const paano::Matrix<Real>& r) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < out.size(); ++i) s += static_cast<double>(out.data()[i]) * r.data()[i];
    return s;
}

template <class Real>
paano::Matrix<Real> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    paano::Matrix<Real> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(u(rng));
    return m;
}

template <class Real>
paano::Tensor<Real> random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    paano::Tensor<Real> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<Real>(u(rng));
    return t;
}
