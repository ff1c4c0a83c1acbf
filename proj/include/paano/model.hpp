#pragma once

// Patch encoder (four conv/batchnorm/ReLU blocks + global average pooling),
// projection head and pair classifier head.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "paano/kernels.hpp"
#include "paano/patching.hpp"
#include "paano/tensor.hpp"

namespace paano {

inline constexpr std::array<std::size_t, 4> kEncoderChannels{128, 256, 128, 64};
inline constexpr std::array<std::size_t, 4> kEncoderKernels{7, 5, 3, 3};
inline constexpr std::size_t kEmbeddingDim = 64;
inline constexpr std::size_t kProjectionDim = 256;
inline constexpr std::size_t kMinPatchLength = 8;

template <class Real>
struct ConvBlock {
    Tensor<Real> weight;  // [C_out, C_in, k]
    Tensor<Real> bias;    // [C_out]
    Tensor<Real> gamma;
    Tensor<Real> beta;
    Tensor<Real> running_mean;
    Tensor<Real> running_var;
};

template <class Real>
struct ModelParams {
    std::size_t channels = 1;  // d
    std::size_t window = 64;   // w
    std::array<ConvBlock<Real>, 4> encoder;
    Tensor<Real> proj1_weight;  // [256, 64]
    Tensor<Real> proj1_bias;
    Tensor<Real> proj2_weight;  // [256, 256]
    Tensor<Real> proj2_bias;
    Tensor<Real> cls_weight;  // [1, 128]
    Tensor<Real> cls_bias;    // [1]

    // Fixed traversal order used by the checkpoint format: for each encoder
    // block weight, bias, gamma, beta, running_mean, running_var; then the two
    // projection layers (weight, bias); then the classifier (weight, bias).
    std::vector<Tensor<Real>*> all_tensors() {
        std::vector<Tensor<Real>*> out;
        for (auto& b : encoder) {
            for (auto* t : {&b.weight, &b.bias, &b.gamma, &b.beta, &b.running_mean, &b.running_var}) out.push_back(t);
        }
        for (auto* t : {&proj1_weight, &proj1_bias, &proj2_weight, &proj2_bias, &cls_weight, &cls_bias}) {
            out.push_back(t);
        }
        return out;
    }
    std::vector<const Tensor<Real>*> all_tensors() const {
        std::vector<const Tensor<Real>*> out;
        for (auto* t : const_cast<ModelParams*>(this)->all_tensors()) out.push_back(t);
        return out;
    }

    // Optimizer-visible parameters (running statistics excluded).
    std::vector<Tensor<Real>*> trainable() {
        std::vector<Tensor<Real>*> out;
        for (auto& b : encoder) {
            for (auto* t : {&b.weight, &b.bias, &b.gamma, &b.beta}) out.push_back(t);
        }
        for (auto* t : {&proj1_weight, &proj1_bias, &proj2_weight, &proj2_bias, &cls_weight, &cls_bias}) {
            out.push_back(t);
        }
        return out;
    }

    void clear_grads() {
        for (auto* t : all_tensors()) t->clear_grad();
    }

    // Expected shape of every tensor in all_tensors() order.
    static std::vector<std::vector<std::size_t>> expected_shapes(std::size_t d) {
        std::vector<std::vector<std::size_t>> shapes;
        std::size_t cin = d;
        for (std::size_t l = 0; l < 4; ++l) {
            const std::size_t c = kEncoderChannels[l];
            shapes.push_back({c, cin, kEncoderKernels[l]});
            for (int i = 0; i < 5; ++i) shapes.push_back({c});
            cin = c;
        }
        shapes.push_back({kProjectionDim, kEmbeddingDim});
        shapes.push_back({kProjectionDim});
        shapes.push_back({kProjectionDim, kProjectionDim});
        shapes.push_back({kProjectionDim});
        shapes.push_back({1, 2 * kEmbeddingDim});
        shapes.push_back({1});
        return shapes;
    }

    template <class Other>
    ModelParams<Other> cast() const {
        ModelParams<Other> out;
        out.channels = channels;
        out.window = window;
        auto dst = out.all_tensors();
        auto src = all_tensors();
        for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<Other>();
        return out;
    }
};

// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero
// biases, batchnorm gamma = 1, beta = 0, running mean 0 and variance 1.
template <class Real = float>
ModelParams<Real> init_params(std::size_t d, std::size_t w, std::uint64_t seed) {
    if (d < 1) throw ShapeError("model needs at least one input channel");
    if (w < kMinPatchLength) {
        throw ShapeError("patch length " + std::to_string(w) + " is below the minimum of " +
                         std::to_string(kMinPatchLength));
    }
    ModelParams<Real> p;
    p.channels = d;
    p.window = w;
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](Tensor<Real>& t, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : t.data) v = static_cast<Real>(dist(rng));
    };
    std::size_t cin = d;
    for (std::size_t l = 0; l < 4; ++l) {
        const std::size_t c = kEncoderChannels[l];
        const std::size_t k = kEncoderKernels[l];
        auto& b = p.encoder[l];
        b.weight = Tensor<Real>({c, cin, k});
        uniform(b.weight, cin * k);
        b.bias = Tensor<Real>({c});
        b.gamma = Tensor<Real>({c}, Real(1));
        b.beta = Tensor<Real>({c});
        b.running_mean = Tensor<Real>({c});
        b.running_var = Tensor<Real>({c}, Real(1));
        cin = c;
    }
    p.proj1_weight = Tensor<Real>({kProjectionDim, kEmbeddingDim});
    uniform(p.proj1_weight, kEmbeddingDim);
    p.proj1_bias = Tensor<Real>({kProjectionDim});
    p.proj2_weight = Tensor<Real>({kProjectionDim, kProjectionDim});
    uniform(p.proj2_weight, kProjectionDim);
    p.proj2_bias = Tensor<Real>({kProjectionDim});
    p.cls_weight = Tensor<Real>({1, 2 * kEmbeddingDim});
    uniform(p.cls_weight, 2 * kEmbeddingDim);
    p.cls_bias = Tensor<Real>({1});
    return p;
}

// Instance-normalized patches in channel-major layout: d x (B*w).
template <class Real>
Matrix<Real> normalized_input(const PatchSet& patches, std::span<const std::size_t> starts) {
    const auto w = static_cast<Eigen::Index>(patches.window());
    const auto d = static_cast<Eigen::Index>(patches.channels());
    Matrix<Real> x(d, static_cast<Eigen::Index>(starts.size()) * w);
    for (std::size_t b = 0; b < starts.size(); ++b) {
        const auto block = patches.block(starts[b]);
        for (Eigen::Index c = 0; c < d; ++c) {
            normalize_channel(block, c, kInstanceNormEps, x.data() + c * x.cols() + static_cast<Eigen::Index>(b) * w);
        }
    }
    return x;
}

template <class Real>
Matrix<Real> normalized_input(const Patch& patch) {
    const auto w = static_cast<Eigen::Index>(patch.length());
    const auto d = static_cast<Eigen::Index>(patch.channels());
    Matrix<Real> x(d, w);
    for (Eigen::Index c = 0; c < d; ++c) normalize_channel(patch.data, c, kInstanceNormEps, x.data() + c * w);
    return x;
}

template <class Real>
struct EncoderCache {
    Eigen::Index window = 0;
    std::array<Matrix<Real>, 5> activations;  // [0] = input, [l + 1] = output of block l
    std::array<BatchNormCache<Real>, 4> batchnorm;
};

// Train-mode forward over a batch. Updates batchnorm running statistics and
// fills `cache` for encoder_backward. Returns H, 64 x B.
template <class Real>
Matrix<Real> encoder_forward_train(ModelParams<Real>& params, Matrix<Real> input, Eigen::Index w,
                                   EncoderCache<Real>& cache) {
    if (input.rows() != static_cast<Eigen::Index>(params.channels)) {
        throw ShapeError("encoder: input has " + std::to_string(input.rows()) + " channels, model expects " +
                         std::to_string(params.channels));
    }
    cache.window = w;
    cache.activations[0] = std::move(input);
    Matrix<Real> conv_out;
    for (std::size_t l = 0; l < 4; ++l) {
        auto& blk = params.encoder[l];
        conv1d_forward(cache.activations[l], w, blk.weight, blk.bias, conv_out);
        batchnorm_forward(conv_out, blk.gamma, blk.beta, blk.running_mean, blk.running_var, Mode::Train,
                          cache.activations[l + 1], &cache.batchnorm[l]);
        relu_forward(cache.activations[l + 1]);
    }
    return global_avg_pool_forward(cache.activations[4], w);
}

// Accumulates encoder parameter gradients given dL/dH.
template <class Real>
void encoder_backward(ModelParams<Real>& params, const EncoderCache<Real>& cache, const Matrix<Real>& grad_h) {
    const Eigen::Index w = cache.window;
    Matrix<Real> grad = global_avg_pool_backward(grad_h, w);
    Matrix<Real> grad_conv;
    Matrix<Real> grad_in;
    for (std::size_t l = 4; l-- > 0;) {
        auto& blk = params.encoder[l];
        relu_backward(cache.activations[l + 1], grad);
        batchnorm_backward(cache.batchnorm[l], blk.gamma, blk.beta, Mode::Train, grad, grad_conv);
        conv1d_backward(cache.activations[l], w, blk.weight, blk.bias, grad_conv, l > 0 ? &grad_in : nullptr);
        if (l > 0) std::swap(grad, grad_in);
    }
}

// Eval-mode forward of one normalized input (d x w). Pure: reads params only.
template <class Real>
Vector<Real> encoder_forward_eval(const ModelParams<Real>& params, const Matrix<Real>& input) {
    const Eigen::Index w = input.cols();
    Matrix<Real> act = input;
    Matrix<Real> conv_out;
    for (std::size_t l = 0; l < 4; ++l) {
        const auto& blk = params.encoder[l];
        conv1d_forward(act, w, blk.weight, blk.bias, conv_out);
        batchnorm_forward_eval(conv_out, blk.gamma, blk.beta, blk.running_mean, blk.running_var, act);
        relu_forward(act);
    }
    return global_avg_pool_forward(act, w).col(0);
}

template <class Real>
void check_patch_dims(const ModelParams<Real>& params, std::size_t w, std::size_t d) {
    if (w != params.window || d != params.channels) {
        throw ShapeError("patch is " + std::to_string(w) + "x" + std::to_string(d) + " but the model expects " +
                         std::to_string(params.window) + "x" + std::to_string(params.channels));
    }
}

// Eval-mode embedding h of a raw patch (instance normalization applied here).
// Only eval mode is offered for single patches: a train-mode forward needs a
// batch, see encoder_forward_train.
template <class Real>
Vector<Real> encode(const ModelParams<Real>& params, const Patch& patch) {
    check_patch_dims(params, patch.length(), patch.channels());
    return encoder_forward_eval(params, normalized_input<Real>(patch));
}

// Encode with an explicit mode. Train mode normalizes with the statistics of
// this single patch and updates the running statistics.
template <class Real>
Vector<Real> encode(ModelParams<Real>& params, const Patch& patch, Mode mode) {
    if (mode == Mode::Eval) return encode(std::as_const(params), patch);
    check_patch_dims(params, patch.length(), patch.channels());
    EncoderCache<Real> cache;
    return encoder_forward_train(params, normalized_input<Real>(patch), static_cast<Eigen::Index>(patch.length()),
                                 cache)
        .col(0);
}

// Eval-mode embeddings for patches at the given 1-based starts, one row per
// patch. Each patch goes through the network on its own so results do not
// depend on batch composition.
template <class Real>
Matrix<Real> encode_all(const ModelParams<Real>& params, const PatchSet& patches, std::span<const std::size_t> starts) {
    check_patch_dims(params, patches.window(), patches.channels());
    Matrix<Real> out(static_cast<Eigen::Index>(starts.size()), static_cast<Eigen::Index>(kEmbeddingDim));
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const std::size_t one[1] = {starts[i]};
        out.row(static_cast<Eigen::Index>(i)) = encoder_forward_eval(params, normalized_input<Real>(patches, one)).transpose();
    }
    return out;
}

// z = W2 relu(W1 h + b1) + b2 for every column of h.
template <class Real>
Matrix<Real> project(const ModelParams<Real>& params, const Matrix<Real>& h) {
    if (h.rows() != static_cast<Eigen::Index>(kEmbeddingDim)) throw ShapeError("project: embedding must have 64 rows");
    Matrix<Real> hidden = linear_forward(h, params.proj1_weight, params.proj1_bias);
    relu_forward(hidden);
    return linear_forward(hidden, params.proj2_weight, params.proj2_bias);
}

template <class Real>
Vector<Real> project(const ModelParams<Real>& params, const Vector<Real>& h) {
    return project(params, Matrix<Real>(h)).col(0);
}

// Probability that `candidate` immediately precedes `anchor`:
// sigmoid(W [anchor; candidate] + b).
template <class Real>
double classify_pair(const ModelParams<Real>& params, const Vector<Real>& anchor, const Vector<Real>& candidate) {
    if (anchor.size() != static_cast<Eigen::Index>(kEmbeddingDim) ||
        candidate.size() != static_cast<Eigen::Index>(kEmbeddingDim)) {
        throw ShapeError("classify_pair: embeddings must have length 64");
    }
    Matrix<Real> pair(2 * kEmbeddingDim, 1);
    pair.topRows(kEmbeddingDim) = anchor;
    pair.bottomRows(kEmbeddingDim) = candidate;
    return sigmoid_forward(linear_forward(pair, params.cls_weight, params.cls_bias))(0, 0);
}

}  // namespace paano
