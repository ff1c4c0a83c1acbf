#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "paano/kernels.hpp"
#include "paano/memory_bank.hpp"
#include "paano/model.hpp"
#include "paano/optim.hpp"
#include "paano/patching.hpp"

namespace paano {

enum class NegativeStrategy { Farthest, Closest, Median, Random };
enum class LambdaSchedule { Linear, Constant };

struct TrainConfig {
    std::size_t w = 64;
    std::size_t iterations = 200;   // T
    std::size_t batch_size = 512;   // M
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double margin = 0.5;            // triplet margin
    std::size_t max_offset = 2;     // r, positive shift bound
    std::size_t random_pairs = 5;   // U, random partners per anchor
    std::size_t decay_iters = 20;   // iterations during which the pretext term is active
    LambdaSchedule lambda_schedule = LambdaSchedule::Linear;
    NegativeStrategy negative = NegativeStrategy::Farthest;
    std::uint64_t seed = 0;
    bool deterministic = true;

    void validate() const {
        auto fail = [](const std::string& m) { throw DataError("invalid training config: " + m); };
        if (w < kMinPatchLength) fail("w must be at least " + std::to_string(kMinPatchLength));
        if (iterations < 1) fail("iterations must be positive");
        if (batch_size < 2) fail("batch size must be at least 2");
        if (!(lr > 0.0)) fail("learning rate must be positive");
        if (!(weight_decay >= 0.0)) fail("weight decay must be non-negative");
        if (!(margin >= 0.0)) fail("margin must be non-negative");
        if (max_offset < 1) fail("max positive offset must be at least 1");
        if (random_pairs < 1) fail("random pairs per anchor must be at least 1");
        if (decay_iters > iterations) fail("decay iterations exceed total iterations");
        if (negative != NegativeStrategy::Farthest) fail("only the 'farthest' negative strategy is implemented");
    }
};

using Rng = std::mt19937_64;

// M patch starts drawn uniformly with replacement from [1, |P|].
inline std::vector<std::size_t> sample_minibatch(const PatchSet& patches, std::size_t m, Rng& rng) {
    if (patches.size() < 2) throw DataError("need at least 2 patches to form a minibatch");
    std::uniform_int_distribution<std::size_t> pick(1, patches.size());
    std::vector<std::size_t> starts(m);
    for (auto& s : starts) s = pick(rng);
    return starts;
}

// Start of a positive for `anchor_start`: anchor shifted by s, s uniform over
// {-r..-1, 1..r} restricted to valid starts. Empty when no shift is valid.
inline std::optional<std::size_t> positive_start(const PatchSet& patches, std::size_t anchor_start, std::size_t r,
                                                 Rng& rng) {
    const auto lo = static_cast<std::int64_t>(std::max<std::int64_t>(1, static_cast<std::int64_t>(anchor_start) -
                                                                            static_cast<std::int64_t>(r)));
    const auto hi = static_cast<std::int64_t>(std::min(patches.size(), anchor_start + r));
    const std::int64_t count = hi - lo;  // candidates in [lo, hi] minus the anchor itself
    if (count <= 0) return std::nullopt;
    auto k = std::uniform_int_distribution<std::int64_t>(0, count - 1)(rng);
    std::int64_t s = lo + k;
    if (s >= static_cast<std::int64_t>(anchor_start)) ++s;
    return static_cast<std::size_t>(s);
}

inline std::optional<Patch> select_positive(const PatchSet& patches, std::size_t anchor_start, std::size_t r,
                                            Rng& rng) {
    const auto s = positive_start(patches, anchor_start, r, rng);
    if (!s) return std::nullopt;
    return patches.at(*s);
}

// Start of the patch ending exactly where the anchor begins, if it exists.
inline std::optional<std::size_t> preceding_start(std::size_t anchor_start, std::size_t w) {
    if (anchor_start <= w) return std::nullopt;
    return anchor_start - w;
}

inline std::optional<Patch> select_preceding(const PatchSet& patches, std::size_t anchor_start, std::size_t w) {
    const auto s = preceding_start(anchor_start, w);
    if (!s) return std::nullopt;
    return patches.at(*s);
}

// Farthest (cosine) column j != i of `h` (one embedding per column); ties go
// to the smallest j.
template <class Real>
std::size_t select_negative(const Matrix<Real>& h, std::size_t i) {
    const auto b = static_cast<std::size_t>(h.cols());
    if (b < 2) throw DataError("negative selection needs a batch of at least 2");
    std::size_t best = i == 0 ? 1 : 0;
    double best_d = -std::numeric_limits<double>::infinity();
    const auto anchor = h.col(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < b; ++j) {
        if (j == i) continue;
        const double d = cosine_distance(anchor, h.col(static_cast<Eigen::Index>(j)));
        if (d > best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

// max(0, d_pos - d_neg + margin) for a single anchor.
inline double triplet_term(double dist_pos, double dist_neg, double margin) {
    return std::max(0.0, dist_pos - dist_neg + margin);
}

// Mean triplet term over a batch; column i of each matrix is one anchor.
template <class Real>
double triplet_loss(const Matrix<Real>& z, const Matrix<Real>& z_pos, const Matrix<Real>& z_neg, double margin) {
    if (z.rows() != z_pos.rows() || z.rows() != z_neg.rows() || z.cols() != z_pos.cols() || z.cols() != z_neg.cols()) {
        throw ShapeError("triplet_loss: shape mismatch");
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
        sum += triplet_term(cosine_distance(z.col(i), z_pos.col(i)), cosine_distance(z.col(i), z_neg.col(i)), margin);
    }
    return z.cols() > 0 ? sum / static_cast<double>(z.cols()) : 0.0;
}

inline constexpr double kProbClamp = 1e-7;

inline double clamp_probability(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// -log p_pre - mean_j log(1 - p_rand_j) for one anchor, probabilities clamped.
inline double pretext_term(double p_pre, std::span<const double> p_rand) {
    double neg = 0.0;
    for (double p : p_rand) neg -= std::log(1.0 - clamp_probability(p));
    if (!p_rand.empty()) neg /= static_cast<double>(p_rand.size());
    return -std::log(clamp_probability(p_pre)) + neg;
}

// Batch mean of pretext_term; p_rand holds U values per anchor, anchor-major.
inline double pretext_loss(std::span<const double> p_pre, std::span<const double> p_rand) {
    if (p_pre.empty()) return 0.0;
    if (p_rand.size() % p_pre.size() != 0) throw ShapeError("pretext_loss: random probabilities not U per anchor");
    const std::size_t u = p_rand.size() / p_pre.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < p_pre.size(); ++i) sum += pretext_term(p_pre[i], p_rand.subspan(i * u, u));
    return sum / static_cast<double>(p_pre.size());
}

inline double lambda_schedule(std::size_t iter, std::size_t decay_iters) {
    if (decay_iters == 0) return 0.0;
    return std::max(0.0, 1.0 - static_cast<double>(iter) / static_cast<double>(decay_iters));
}

inline double lambda_schedule(std::size_t iter, std::size_t decay_iters, LambdaSchedule schedule) {
    if (schedule == LambdaSchedule::Constant) return iter < decay_iters ? 1.0 : 0.0;
    return lambda_schedule(iter, decay_iters);
}

struct TrainLogEntry {
    std::size_t iter = 0;
    double lr = 0.0;
    double lambda = 0.0;
    double triplet_loss = 0.0;
    double pretext_loss = 0.0;  // 0 when lambda is 0 (term not evaluated)
    double total_loss = 0.0;
};

inline std::string format_log_header() { return "iter,lr,lambda,triplet_loss,pretext_loss,total_loss"; }

inline std::string format_log_line(const TrainLogEntry& e) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g", e.iter, e.lr, e.lambda, e.triplet_loss,
                  e.pretext_loss, e.total_loss);
    return buf;
}

// One optimization run over a fixed patch set. Each step() is one iteration:
// sample anchors, draw positives / preceding patches, encode everything in a
// single train-mode batch, mine farthest negatives among the anchors, then
// apply AdamW on L = L_triplet + lambda * L_pretext.
class Trainer {
public:
    Trainer(const PatchSet& patches, TrainConfig config)
        : patches_(patches), config_(std::move(config)), rng_(config_.seed) {
        config_.validate();
        if (patches_.window() != config_.w) throw DataError("patch set window does not match config.w");
        if (patches_.series_length() < config_.w + config_.max_offset) {
            throw DataError("training series has " + std::to_string(patches_.series_length()) +
                            " steps; need at least w + r = " + std::to_string(config_.w + config_.max_offset));
        }
        params_ = init_params<float>(patches_.channels(), config_.w, config_.seed);
        optimizer_.base_lr = config_.lr;
        optimizer_.weight_decay = config_.weight_decay;
    }

    TrainLogEntry step();

    std::size_t iteration() const { return iter_; }
    const TrainConfig& config() const { return config_; }
    ModelParams<float>& params() { return params_; }
    const ModelParams<float>& params() const { return params_; }

private:
    const PatchSet& patches_;
    TrainConfig config_;
    Rng rng_;
    ModelParams<float> params_;
    OptimizerState<float> optimizer_;
    std::size_t iter_ = 0;
};

inline TrainLogEntry Trainer::step() {
    using Mat = Matrix<float>;
    const std::size_t m = config_.batch_size;
    const std::size_t w = config_.w;
    TrainLogEntry entry;
    entry.iter = iter_;
    entry.lr = cosine_lr(static_cast<std::int64_t>(iter_), static_cast<std::int64_t>(config_.iterations), config_.lr);
    entry.lambda = lambda_schedule(iter_, config_.decay_iters, config_.lambda_schedule);
    const bool pretext = entry.lambda > 0.0;

    // Anchors with a valid positive; rejected anchors are redrawn.
    std::vector<std::size_t> starts = sample_minibatch(patches_, m, rng_);
    starts.resize(2 * m);
    std::uniform_int_distribution<std::size_t> pick(1, patches_.size());
    for (std::size_t i = 0; i < m; ++i) {
        auto pos = positive_start(patches_, starts[i], config_.max_offset, rng_);
        while (!pos) {
            starts[i] = pick(rng_);
            pos = positive_start(patches_, starts[i], config_.max_offset, rng_);
        }
        starts[m + i] = *pos;
    }
    // Anchors that have a preceding patch take part in the pretext term.
    std::vector<std::size_t> with_pre;
    if (pretext) {
        for (std::size_t i = 0; i < m; ++i) {
            if (auto pre = preceding_start(starts[i], w)) {
                with_pre.push_back(i);
                starts.push_back(*pre);
            }
        }
    }

    EncoderCache<float> cache;
    const Mat h = encoder_forward_train(params_, normalized_input<float>(patches_, starts),
                                        static_cast<Eigen::Index>(w), cache);
    const auto n_total = h.cols();
    const auto mi = static_cast<Eigen::Index>(m);

    // Projection of anchors and positives.
    const Mat h_ap = h.leftCols(2 * mi);
    Mat hidden = linear_forward(h_ap, params_.proj1_weight, params_.proj1_bias);
    relu_forward(hidden);
    const Mat z = linear_forward(hidden, params_.proj2_weight, params_.proj2_bias);

    // Farthest negatives among anchors, on detached embeddings.
    const Mat h_anchor = h.leftCols(mi);
    std::vector<std::size_t> negative(m);
    for (std::size_t i = 0; i < m; ++i) negative[i] = select_negative(h_anchor, i);

    Mat grad_z = Mat::Zero(z.rows(), z.cols());
    double triplet_sum = 0.0;
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto a = static_cast<Eigen::Index>(i);
        const auto p = static_cast<Eigen::Index>(m + i);
        const auto q = static_cast<Eigen::Index>(negative[i]);
        const double dp = cosine_distance(z.col(a), z.col(p));
        const double dn = cosine_distance(z.col(a), z.col(q));
        const double term = triplet_term(dp, dn, config_.margin);
        triplet_sum += term;
        if (term > 0.0) {
            cosine_distance_backward(z.col(a), z.col(p), inv_m, grad_z.col(a), grad_z.col(p));
            cosine_distance_backward(z.col(a), z.col(q), -inv_m, grad_z.col(a), grad_z.col(q));
        }
    }
    entry.triplet_loss = triplet_sum * inv_m;

    Mat grad_h = Mat::Zero(h.rows(), n_total);
    params_.clear_grads();
    if (pretext && !with_pre.empty()) {
        const std::size_t u = config_.random_pairs;
        const bool distinct = m >= u + 1;
        // Columns: for each anchor with a predecessor, (anchor, pre) then U (anchor, random).
        const std::size_t pairs_per = 1 + u;
        const std::size_t n_pairs = with_pre.size() * pairs_per;
        Mat pair_in(static_cast<Eigen::Index>(2 * kEmbeddingDim), static_cast<Eigen::Index>(n_pairs));
        std::vector<std::size_t> partner(n_pairs);
        std::vector<std::size_t> chosen;
        std::uniform_int_distribution<std::size_t> other(0, m - 2);
        for (std::size_t a = 0; a < with_pre.size(); ++a) {
            const std::size_t i = with_pre[a];
            const std::size_t base = a * pairs_per;
            partner[base] = 2 * m + a;
            chosen.clear();
            while (chosen.size() < u) {
                std::size_t j = other(rng_);
                if (j >= i) ++j;
                if (distinct && std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
                chosen.push_back(j);
            }
            for (std::size_t k = 0; k < u; ++k) partner[base + 1 + k] = chosen[k];
            for (std::size_t k = 0; k < pairs_per; ++k) {
                const auto col = static_cast<Eigen::Index>(base + k);
                pair_in.col(col).head(kEmbeddingDim) = h.col(static_cast<Eigen::Index>(i));
                pair_in.col(col).tail(kEmbeddingDim) = h.col(static_cast<Eigen::Index>(partner[base + k]));
            }
        }
        const Mat prob = sigmoid_forward(linear_forward(pair_in, params_.cls_weight, params_.cls_bias));
        Mat grad_logit(1, static_cast<Eigen::Index>(n_pairs));
        const double scale = entry.lambda / static_cast<double>(with_pre.size());
        double pre_sum = 0.0;
        for (std::size_t a = 0; a < with_pre.size(); ++a) {
            const std::size_t base = a * pairs_per;
            const double p_pre = prob(0, static_cast<Eigen::Index>(base));
            double term = -std::log(clamp_probability(p_pre));
            // d(-log p)/dlogit = p - 1 inside the clamp range, 0 outside.
            grad_logit(0, static_cast<Eigen::Index>(base)) =
                static_cast<float>(clamp_probability(p_pre) == p_pre ? scale * (p_pre - 1.0) : 0.0);
            for (std::size_t k = 1; k <= u; ++k) {
                const double p = prob(0, static_cast<Eigen::Index>(base + k));
                term -= std::log(1.0 - clamp_probability(p)) / static_cast<double>(u);
                grad_logit(0, static_cast<Eigen::Index>(base + k)) =
                    static_cast<float>(clamp_probability(p) == p ? scale * p / static_cast<double>(u) : 0.0);
            }
            pre_sum += term;
        }
        entry.pretext_loss = pre_sum / static_cast<double>(with_pre.size());
        const Mat grad_pair = linear_backward(pair_in, params_.cls_weight, params_.cls_bias, grad_logit);
        for (std::size_t a = 0; a < with_pre.size(); ++a) {
            const std::size_t i = with_pre[a];
            for (std::size_t k = 0; k < pairs_per; ++k) {
                const auto col = static_cast<Eigen::Index>(a * pairs_per + k);
                grad_h.col(static_cast<Eigen::Index>(i)) += grad_pair.col(col).head(kEmbeddingDim);
                grad_h.col(static_cast<Eigen::Index>(partner[a * pairs_per + k])) += grad_pair.col(col).tail(kEmbeddingDim);
            }
        }
    }
    entry.total_loss = entry.triplet_loss + entry.lambda * entry.pretext_loss;
    if (!std::isfinite(entry.total_loss)) {
        throw Error("non-finite training loss at iteration " + std::to_string(iter_));
    }

    // Back through the projection head into the anchor/positive embeddings.
    Mat grad_hidden = linear_backward(hidden, params_.proj2_weight, params_.proj2_bias, grad_z);
    relu_backward(hidden, grad_hidden);
    grad_h.leftCols(2 * mi) += linear_backward(h_ap, params_.proj1_weight, params_.proj1_bias, grad_hidden);
    encoder_backward(params_, cache, grad_h);

    auto trainable = params_.trainable();
    adamw_step<float>(trainable, optimizer_, entry.lr);
    ++iter_;
    return entry;
}

struct TrainResult {
    ModelParams<float> params;
    MemoryBank bank;
    std::vector<TrainLogEntry> log;
};

// Runs config.iterations steps on every row of `series` (labels are never
// read), then embeds all training patches in eval mode.
inline TrainResult train(const TimeSeries& series, const TrainConfig& config,
                         const std::function<void(const TrainLogEntry&)>& on_iteration = {}) {
    config.validate();
    const PatchSet patches = extract_patches(series, config.w);
    Trainer trainer(patches, config);
    TrainResult result;
    result.log.reserve(config.iterations);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        result.log.push_back(trainer.step());
        if (on_iteration) on_iteration(result.log.back());
    }
    result.params = std::move(trainer.params());
    result.bank = build_bank(result.params, patches);
    return result;
}

}  // namespace paano
