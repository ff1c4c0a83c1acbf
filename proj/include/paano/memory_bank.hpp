#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "paano/kernels.hpp"
#include "paano/model.hpp"
#include "paano/patching.hpp"

namespace paano {

using EmbeddingMatrix = Matrix<float>;

// One embedding per training patch, in patch order.
struct MemoryBank {
    EmbeddingMatrix embeddings;  // count x l
    std::size_t size() const { return static_cast<std::size_t>(embeddings.rows()); }
};

// K representatives of a MemoryBank; each row is an exact copy of a bank row.
struct ReducedMemoryBank {
    EmbeddingMatrix embeddings;          // K x l
    std::vector<std::size_t> source_rows;  // bank row each representative came from (empty after load)
    std::size_t size() const { return static_cast<std::size_t>(embeddings.rows()); }
};

inline MemoryBank build_bank(const ModelParams<float>& params, const PatchSet& patches) {
    std::vector<std::size_t> starts(patches.size());
    std::iota(starts.begin(), starts.end(), std::size_t{1});
    return MemoryBank{encode_all(params, patches, starts)};
}

struct KMeansResult {
    Matrix<double> centroids;              // K x l
    std::vector<std::size_t> assignments;  // per input row
    std::vector<double> inertia_trace;     // inertia after each assignment step
    std::size_t iterations = 0;
    bool converged = false;

    double inertia() const { return inertia_trace.empty() ? 0.0 : inertia_trace.back(); }
};

namespace detail {

template <class A, class B>
double squared_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a(i)) - static_cast<double>(b(i));
        s += d * d;
    }
    return s;
}

}  // namespace detail

inline constexpr std::size_t kKMeansMaxIters = 50;

// Lloyd's algorithm with k-means++ seeding (Euclidean). Stops when the
// assignment no longer changes or after max_iters assignment steps. A cluster
// left empty by an update is re-seeded with the point farthest from its own
// centroid.
inline KMeansResult kmeans(const EmbeddingMatrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k < 1) throw DataError("kmeans: K must be at least 1");
    if (k > n) throw DataError("kmeans: K = " + std::to_string(k) + " exceeds the number of points " + std::to_string(n));
    const Eigen::Index dim = points.cols();
    std::mt19937_64 rng(seed);

    KMeansResult res;
    res.centroids.resize(static_cast<Eigen::Index>(k), dim);

    // k-means++ seeding.
    std::vector<char> chosen(n, 0);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t pick = first;
        if (c > 0) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) total += nearest[i];
            if (total > 0.0) {
                double r = std::uniform_real_distribution<double>(0.0, total)(rng);
                pick = n;
                for (std::size_t i = 0; i < n; ++i) {
                    if (nearest[i] <= 0.0) continue;
                    pick = i;
                    r -= nearest[i];
                    if (r < 0.0) break;
                }
            } else {
                // Every remaining point coincides with a centroid: take an unused one.
                std::vector<std::size_t> unused;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!chosen[i]) unused.push_back(i);
                }
                pick = unused[std::uniform_int_distribution<std::size_t>(0, unused.size() - 1)(rng)];
            }
        }
        chosen[pick] = 1;
        res.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick)).cast<double>();
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], detail::squared_distance(points.row(static_cast<Eigen::Index>(i)),
                                                                       res.centroids.row(static_cast<Eigen::Index>(c))));
        }
    }

    res.assignments.assign(n, k);
    std::vector<double> dist(n, 0.0);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = detail::squared_distance(points.row(static_cast<Eigen::Index>(i)),
                                                          res.centroids.row(static_cast<Eigen::Index>(c)));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            changed = changed || best != res.assignments[i];
            res.assignments[i] = best;
            dist[i] = best_d;
            inertia += best_d;
        }
        res.inertia_trace.push_back(inertia);
        res.iterations = iter + 1;
        if (!changed) {
            res.converged = true;
            break;
        }

        Matrix<double> sums = Matrix<double>::Zero(static_cast<Eigen::Index>(k), dim);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(static_cast<Eigen::Index>(res.assignments[i])) += points.row(static_cast<Eigen::Index>(i)).cast<double>();
            ++counts[res.assignments[i]];
        }
        std::vector<char> taken(n, 0);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                res.centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
                continue;
            }
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            taken[far] = 1;
            res.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far)).cast<double>();
        }
    }
    return res;
}

// K = max(1, floor(ratio * |bank|)) representatives: for each k-means cluster
// the member nearest (Euclidean) to the centroid, ties to the lower bank row.
inline ReducedMemoryBank reduce_bank(const MemoryBank& bank, double ratio, std::uint64_t seed,
                                     std::size_t max_iters = kKMeansMaxIters) {
    if (bank.size() == 0) throw DataError("reduce_bank: memory bank is empty");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw DataError("reduce_bank: ratio must be in (0, 1]");
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(bank.size()))));
    const KMeansResult km = kmeans(bank.embeddings, k, max_iters, seed);

    ReducedMemoryBank out;
    out.embeddings.resize(static_cast<Eigen::Index>(k), bank.embeddings.cols());
    out.source_rows.assign(k, 0);
    std::vector<double> best(k, std::numeric_limits<double>::infinity());
    std::vector<char> found(k, 0);
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const std::size_t c = km.assignments[i];
        const double d = detail::squared_distance(bank.embeddings.row(static_cast<Eigen::Index>(i)),
                                                  km.centroids.row(static_cast<Eigen::Index>(c)));
        if (d < best[c]) {
            best[c] = d;
            out.source_rows[c] = i;
            found[c] = 1;
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (found[c]) continue;
        // Cluster emptied by the final assignment: fall back to the nearest bank row.
        for (std::size_t i = 0; i < bank.size(); ++i) {
            const double d = detail::squared_distance(bank.embeddings.row(static_cast<Eigen::Index>(i)),
                                                      km.centroids.row(static_cast<Eigen::Index>(c)));
            if (d < best[c]) {
                best[c] = d;
                out.source_rows[c] = i;
            }
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        out.embeddings.row(static_cast<Eigen::Index>(c)) = bank.embeddings.row(static_cast<Eigen::Index>(out.source_rows[c]));
    }
    return out;
}

// The k smallest cosine distances from `query` to the bank rows, ascending,
// ties resolved by bank row. k is clamped to the bank size.
template <class Q>
std::vector<double> knn(const ReducedMemoryBank& bank, const Eigen::MatrixBase<Q>& query, std::size_t k) {
    if (bank.size() == 0) throw DataError("knn: memory bank is empty");
    if (k < 1) throw DataError("knn: k must be at least 1");
    if (query.size() != bank.embeddings.cols()) throw ShapeError("knn: query dimension does not match the bank");
    k = std::min(k, bank.size());
    std::vector<std::pair<double, std::size_t>> dist(bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i) {
        dist[i] = {cosine_distance(query, bank.embeddings.row(static_cast<Eigen::Index>(i))), i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::vector<double> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].first;
    return out;
}

}  // namespace paano
