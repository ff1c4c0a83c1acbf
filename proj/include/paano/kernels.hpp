#pragma once

// Differentiable building blocks used by the patch encoder. Activations are
// laid out channel-major: a batch of B sequences of length w with C channels is
// a C x (B*w) row-major matrix, column b*w + t holding time step t of sample b.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>

#include "paano/tensor.hpp"

namespace paano {

enum class Mode { Train, Eval };

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kZeroNorm = 1e-12;

namespace detail {

// Samples per GEMM in conv1d. Fixed so that a given batch size always uses the
// same product shapes.
inline constexpr Eigen::Index kConvChunk = 64;

template <class Real>
void im2col(const Matrix<Real>& in, Eigen::Index w, Eigen::Index k, Eigen::Index first_sample,
            Eigen::Index samples, Matrix<Real>& col) {
    const Eigen::Index cin = in.rows();
    const Eigen::Index pad = (k - 1) / 2;
    col.resize(cin * k, samples * w);
    for (Eigen::Index ci = 0; ci < cin; ++ci) {
        const Real* src_row = in.data() + ci * in.cols() + first_sample * w;
        for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::Index shift = j - pad;
            Real* dst_row = col.data() + (ci * k + j) * col.cols();
            const Eigen::Index lo = std::min<Eigen::Index>(w, std::max<Eigen::Index>(0, -shift));
            const Eigen::Index hi = std::max<Eigen::Index>(lo, std::min<Eigen::Index>(w, w - shift));
            for (Eigen::Index b = 0; b < samples; ++b) {
                Real* dst = dst_row + b * w;
                const Real* src = src_row + b * w;
                std::fill(dst, dst + lo, Real(0));
                if (hi > lo) std::memcpy(dst + lo, src + lo + shift, sizeof(Real) * static_cast<std::size_t>(hi - lo));
                std::fill(dst + hi, dst + w, Real(0));
            }
        }
    }
}

template <class Real>
void col2im_add(const Matrix<Real>& col, Eigen::Index w, Eigen::Index k, Eigen::Index first_sample,
                Eigen::Index samples, Matrix<Real>& din) {
    const Eigen::Index cin = din.rows();
    const Eigen::Index pad = (k - 1) / 2;
    for (Eigen::Index ci = 0; ci < cin; ++ci) {
        Real* dst_row = din.data() + ci * din.cols() + first_sample * w;
        for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::Index shift = j - pad;
            const Real* src_row = col.data() + (ci * k + j) * col.cols();
            const Eigen::Index lo = std::min<Eigen::Index>(w, std::max<Eigen::Index>(0, -shift));
            const Eigen::Index hi = std::max<Eigen::Index>(lo, std::min<Eigen::Index>(w, w - shift));
            for (Eigen::Index b = 0; b < samples; ++b) {
                const Real* src = src_row + b * w;
                Real* dst = dst_row + b * w + shift;
                for (Eigen::Index t = lo; t < hi; ++t) dst[t] += src[t];
            }
        }
    }
}

// Sums in double with eight interleaved accumulators combined pairwise: a
// fixed evaluation order that the compiler can still vectorize.
template <class Real, class F>
double lane_sum(const Real* x, Eigen::Index n, F&& f) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    Eigen::Index i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int l = 0; l < 8; ++l) acc[l] += f(static_cast<double>(x[i + l]), i + l);
    }
    for (; i < n; ++i) acc[i % 8] += f(static_cast<double>(x[i]), i);
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline void require(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace detail

// Stride-1 cross-correlation with (k-1)/2 zero padding on each side.
// weight: [C_out, C_in, k], bias: [C_out].
template <class Real>
void conv1d_forward(const Matrix<Real>& in, Eigen::Index w, const Tensor<Real>& weight,
                    const Tensor<Real>& bias, Matrix<Real>& out) {
    detail::require(weight.shape.size() == 3, "conv1d: weight must be rank 3");
    const auto cout = static_cast<Eigen::Index>(weight.shape[0]);
    const auto cin = static_cast<Eigen::Index>(weight.shape[1]);
    const auto k = static_cast<Eigen::Index>(weight.shape[2]);
    detail::require(k % 2 == 1, "conv1d: kernel size must be odd");
    detail::require(in.rows() == cin, "conv1d: input channel mismatch");
    detail::require(w > 0 && in.cols() % w == 0, "conv1d: input width is not a multiple of w");
    detail::require(bias.size() == static_cast<std::size_t>(cout), "conv1d: bias size mismatch");

    const Eigen::Index samples = in.cols() / w;
    const auto kernel = weight.matrix(static_cast<std::size_t>(cout));
    out.resize(cout, in.cols());
    Matrix<Real> col;
    for (Eigen::Index s0 = 0; s0 < samples; s0 += detail::kConvChunk) {
        const Eigen::Index ns = std::min(detail::kConvChunk, samples - s0);
        detail::im2col(in, w, k, s0, ns, col);
        out.middleCols(s0 * w, ns * w).noalias() = kernel * col;
    }
    out.colwise() += bias.vector();
}

// Accumulates weight/bias gradients; writes the input gradient when `din` is
// non-null.
template <class Real>
void conv1d_backward(const Matrix<Real>& in, Eigen::Index w, Tensor<Real>& weight, Tensor<Real>& bias,
                     const Matrix<Real>& dout, Matrix<Real>* din) {
    const auto cout = static_cast<Eigen::Index>(weight.shape[0]);
    const auto k = static_cast<Eigen::Index>(weight.shape[2]);
    detail::require(dout.rows() == cout && dout.cols() == in.cols(), "conv1d: output gradient shape mismatch");
    const Eigen::Index samples = in.cols() / w;
    const auto kernel = weight.matrix(static_cast<std::size_t>(cout));
    auto gkernel = weight.grad_matrix(static_cast<std::size_t>(cout));
    Matrix<Real> kernel_t;
    if (din) {
        din->setZero(in.rows(), in.cols());
        kernel_t = kernel.transpose();
    }
    Matrix<Real> col;
    Matrix<Real> dcol;
    for (Eigen::Index s0 = 0; s0 < samples; s0 += detail::kConvChunk) {
        const Eigen::Index ns = std::min(detail::kConvChunk, samples - s0);
        detail::im2col(in, w, k, s0, ns, col);
        const auto dblock = dout.middleCols(s0 * w, ns * w);
        gkernel.noalias() += dblock * col.transpose();
        if (din) {
            dcol.noalias() = kernel_t * dblock;
            detail::col2im_add(dcol, w, k, s0, ns, *din);
        }
    }
    bias.grad_vector() += dout.rowwise().sum();
}

template <class Real>
struct BatchNormCache {
    Matrix<Real> xhat;
    Vector<Real> inv_std;
};

namespace detail {

template <class Real>
void batchnorm_apply(const Matrix<Real>& in, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                     const Tensor<Real>& running_mean, const Tensor<Real>& running_var, Mode mode,
                     Matrix<Real>& out, BatchNormCache<Real>* cache, Tensor<Real>* update_mean,
                     Tensor<Real>* update_var, double momentum, double eps) {
    const Eigen::Index channels = in.rows();
    const Eigen::Index n = in.cols();
    require(gamma.size() == static_cast<std::size_t>(channels) && beta.size() == static_cast<std::size_t>(channels) &&
                running_mean.size() == static_cast<std::size_t>(channels) &&
                running_var.size() == static_cast<std::size_t>(channels),
            "batchnorm: parameter size mismatch");
    if (mode == Mode::Train && n < 2) throw ShapeError("batchnorm: train mode needs at least 2 values per channel");

    out.resize(channels, n);
    if (cache) {
        cache->xhat.resize(channels, n);
        cache->inv_std.resize(channels);
    }
    for (Eigen::Index c = 0; c < channels; ++c) {
        const Real* x = in.data() + c * n;
        double mean = 0.0;
        double var = 0.0;
        if (mode == Mode::Train) {
            mean = lane_sum(x, n, [](double v, Eigen::Index) { return v; }) / static_cast<double>(n);
            var = lane_sum(x, n, [mean](double v, Eigen::Index) { return (v - mean) * (v - mean); }) /
                  static_cast<double>(n);
            const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
            if (update_mean) {
                update_mean->data[c] =
                    static_cast<Real>((1.0 - momentum) * running_mean.data[c] + momentum * mean);
            }
            if (update_var) {
                update_var->data[c] =
                    static_cast<Real>((1.0 - momentum) * running_var.data[c] + momentum * unbiased);
            }
        } else {
            mean = running_mean.data[c];
            var = running_var.data[c];
        }
        const Real istd = static_cast<Real>(1.0 / std::sqrt(var + eps));
        const Real m = static_cast<Real>(mean);
        const Real g = gamma.data[c];
        const Real b = beta.data[c];
        Real* y = out.data() + c * n;
        if (cache) {
            cache->inv_std[c] = istd;
            Real* xh = cache->xhat.data() + c * n;
            for (Eigen::Index i = 0; i < n; ++i) {
                xh[i] = (x[i] - m) * istd;
                y[i] = g * xh[i] + b;
            }
        } else {
            for (Eigen::Index i = 0; i < n; ++i) y[i] = g * ((x[i] - m) * istd) + b;
        }
    }
}

}  // namespace detail

// Per-channel normalization over all B*w positions. Train mode uses batch
// statistics (population variance) and updates the running stats with
// new = (1 - momentum) * old + momentum * batch, the batch variance taken
// unbiased; eval mode uses the running stats.
template <class Real>
void batchnorm_forward(const Matrix<Real>& in, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                       Tensor<Real>& running_mean, Tensor<Real>& running_var, Mode mode, Matrix<Real>& out,
                       BatchNormCache<Real>* cache = nullptr, double momentum = kBatchNormMomentum,
                       double eps = kBatchNormEps) {
    detail::batchnorm_apply(in, gamma, beta, running_mean, running_var, mode, out, cache, &running_mean,
                            &running_var, momentum, eps);
}

// Eval-mode forward over read-only parameters.
template <class Real>
void batchnorm_forward_eval(const Matrix<Real>& in, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                            const Tensor<Real>& running_mean, const Tensor<Real>& running_var, Matrix<Real>& out,
                            double eps = kBatchNormEps) {
    detail::batchnorm_apply<Real>(in, gamma, beta, running_mean, running_var, Mode::Eval, out, nullptr, nullptr,
                                  nullptr, 0.0, eps);
}

template <class Real>
void batchnorm_backward(const BatchNormCache<Real>& cache, Tensor<Real>& gamma, Tensor<Real>& beta, Mode mode,
                        const Matrix<Real>& dout, Matrix<Real>& din) {
    const Eigen::Index channels = dout.rows();
    const Eigen::Index n = dout.cols();
    auto& ggamma = gamma.ensure_grad();
    auto& gbeta = beta.ensure_grad();
    din.resize(channels, n);
    for (Eigen::Index c = 0; c < channels; ++c) {
        const Real* dy = dout.data() + c * n;
        const Real* xh = cache.xhat.data() + c * n;
        const double sum_dy = detail::lane_sum(dy, n, [](double v, Eigen::Index) { return v; });
        const double sum_dy_xh =
            detail::lane_sum(dy, n, [xh](double v, Eigen::Index i) { return v * static_cast<double>(xh[i]); });
        ggamma[c] += static_cast<Real>(sum_dy_xh);
        gbeta[c] += static_cast<Real>(sum_dy);
        const Real scale = gamma.data[c] * cache.inv_std[c];
        Real* dx = din.data() + c * n;
        if (mode == Mode::Train) {
            const Real mean_dy = static_cast<Real>(sum_dy / static_cast<double>(n));
            const Real mean_dy_xh = static_cast<Real>(sum_dy_xh / static_cast<double>(n));
            for (Eigen::Index i = 0; i < n; ++i) dx[i] = scale * (dy[i] - mean_dy - xh[i] * mean_dy_xh);
        } else {
            for (Eigen::Index i = 0; i < n; ++i) dx[i] = scale * dy[i];
        }
    }
}

template <class Real>
void relu_forward(Matrix<Real>& x) {
    x = x.cwiseMax(Real(0));
}

// `out` is the forward output; gradient passes where it is positive.
template <class Real>
void relu_backward(const Matrix<Real>& out, Matrix<Real>& grad) {
    grad = (out.array() > Real(0)).select(grad, Real(0));
}

// C x (B*w) -> C x B, averaging over time.
template <class Real>
Matrix<Real> global_avg_pool_forward(const Matrix<Real>& in, Eigen::Index w) {
    detail::require(w > 0 && in.cols() % w == 0, "global_avg_pool: width is not a multiple of w");
    const Eigen::Index samples = in.cols() / w;
    Matrix<Real> out(in.rows(), samples);
    for (Eigen::Index c = 0; c < in.rows(); ++c) {
        for (Eigen::Index b = 0; b < samples; ++b) {
            out(c, b) = in.row(c).segment(b * w, w).sum() / static_cast<Real>(w);
        }
    }
    return out;
}

template <class Real>
Matrix<Real> global_avg_pool_backward(const Matrix<Real>& dout, Eigen::Index w) {
    Matrix<Real> din(dout.rows(), dout.cols() * w);
    for (Eigen::Index c = 0; c < dout.rows(); ++c) {
        for (Eigen::Index b = 0; b < dout.cols(); ++b) {
            din.row(c).segment(b * w, w).setConstant(dout(c, b) / static_cast<Real>(w));
        }
    }
    return din;
}

// Y = W X + b, X: in x B (one column per sample), W: [out, in], b: [out].
template <class Real>
Matrix<Real> linear_forward(const Matrix<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias) {
    detail::require(weight.shape.size() == 2, "linear: weight must be rank 2");
    detail::require(static_cast<Eigen::Index>(weight.shape[1]) == x.rows(), "linear: input size mismatch");
    detail::require(bias.size() == weight.shape[0], "linear: bias size mismatch");
    Matrix<Real> y = weight.matrix(weight.shape[0]) * x;
    y.colwise() += bias.vector();
    return y;
}

// Accumulates parameter gradients and returns dX.
template <class Real>
Matrix<Real> linear_backward(const Matrix<Real>& x, Tensor<Real>& weight, Tensor<Real>& bias,
                             const Matrix<Real>& dy) {
    detail::require(dy.rows() == static_cast<Eigen::Index>(weight.shape[0]) && dy.cols() == x.cols(),
                    "linear: output gradient shape mismatch");
    weight.grad_matrix(weight.shape[0]).noalias() += dy * x.transpose();
    bias.grad_vector() += dy.rowwise().sum();
    return weight.matrix(weight.shape[0]).transpose() * dy;
}

template <class Real>
Matrix<Real> sigmoid_forward(const Matrix<Real>& x) {
    return x.unaryExpr([](Real v) { return Real(1) / (Real(1) + std::exp(-v)); });
}

template <class Real>
Matrix<Real> sigmoid_backward(const Matrix<Real>& out, const Matrix<Real>& dy) {
    return (dy.array() * out.array() * (Real(1) - out.array())).matrix();
}

// 1 - a.b / (|a||b|); 1 when either norm is below 1e-12.
template <class A, class B>
double cosine_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double x = a(i);
        const double y = b(i);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < kZeroNorm || nb < kZeroNorm) return 1.0;
    return 1.0 - dot / (na * nb);
}

template <class Real>
double cosine_distance(std::span<const Real> a, std::span<const Real> b) {
    using Map = Eigen::Map<const Vector<Real>>;
    return cosine_distance(Map(a.data(), static_cast<Eigen::Index>(a.size())),
                           Map(b.data(), static_cast<Eigen::Index>(b.size())));
}

// Adds scale * d(dist)/da to ga and scale * d(dist)/db to gb.
template <class A, class B, class GA, class GB>
void cosine_distance_backward(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, double scale,
                              const Eigen::MatrixBase<GA>& ga_out, const Eigen::MatrixBase<GB>& gb_out) {
    // Writable block expressions arrive as temporaries; the usual Eigen idiom.
    auto& ga = const_cast<Eigen::MatrixBase<GA>&>(ga_out);
    auto& gb = const_cast<Eigen::MatrixBase<GB>&>(gb_out);
    double dot = 0.0;
    double na2 = 0.0;
    double nb2 = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double x = a(i);
        const double y = b(i);
        dot += x * y;
        na2 += x * x;
        nb2 += y * y;
    }
    const double na = std::sqrt(na2);
    const double nb = std::sqrt(nb2);
    if (na < kZeroNorm || nb < kZeroNorm) return;
    const double inv = 1.0 / (na * nb);
    const double ca = dot * inv / na2;
    const double cb = dot * inv / nb2;
    using Scalar = typename GA::Scalar;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double x = a(i);
        const double y = b(i);
        ga(i) += static_cast<Scalar>(scale * -(y * inv - ca * x));
        gb(i) += static_cast<Scalar>(scale * -(x * inv - cb * y));
    }
}

}  // namespace paano
