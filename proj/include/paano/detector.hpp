#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "paano/memory_bank.hpp"
#include "paano/model.hpp"
#include "paano/patching.hpp"
#include "paano/series_io.hpp"

namespace paano {

struct DetectorConfig {
    std::size_t k = 3;
};

// Mean of the k smallest cosine distances from an embedding to the bank.
template <class Q>
double embedding_score(const ReducedMemoryBank& bank, const Eigen::MatrixBase<Q>& h, std::size_t k) {
    const auto d = knn(bank, h, k);
    double sum = 0.0;
    for (double v : d) sum += v;
    return sum / static_cast<double>(d.size());
}

inline double patch_score(const ModelParams<float>& params, const ReducedMemoryBank& bank, const Patch& patch,
                          std::size_t k) {
    return embedding_score(bank, encode(params, patch), k);
}

// Per-patch scores S(p_t) for t = 1 .. N'-w+1, each patch encoded once.
inline std::vector<double> patch_scores(const ModelParams<float>& params, const ReducedMemoryBank& bank,
                                        const PatchSet& patches, std::size_t k) {
    std::vector<std::size_t> starts(patches.size());
    std::iota(starts.begin(), starts.end(), std::size_t{1});
    const EmbeddingMatrix h = encode_all(params, patches, starts);
    std::vector<double> out(patches.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = embedding_score(bank, h.row(static_cast<Eigen::Index>(i)), k);
    return out;
}

// s_t = mean of S(p_u) over the valid starts u in
// [max(1, t - w + 1), min(t, N' - w + 1)], i.e. every patch containing t.
inline std::vector<double> aggregate_scores(std::span<const double> per_patch, std::size_t n, std::size_t w) {
    std::vector<double> s(n);
    const std::size_t last_start = per_patch.size();
    for (std::size_t t = 1; t <= n; ++t) {
        const std::size_t lo = t >= w ? t - w + 1 : 1;
        const std::size_t hi = std::min(t, last_start);
        double sum = 0.0;
        for (std::size_t u = lo; u <= hi; ++u) sum += per_patch[u - 1];
        s[t - 1] = sum / static_cast<double>(hi - lo + 1);
    }
    return s;
}

inline ScoreSeries score_series(const ModelParams<float>& params, const ReducedMemoryBank& bank,
                                const TimeSeries& series, std::size_t k) {
    const PatchSet patches = extract_patches(series, params.window);
    if (patches.channels() != params.channels) {
        throw ShapeError("series has " + std::to_string(patches.channels()) + " channels, model expects " +
                         std::to_string(params.channels));
    }
    const auto per_patch = patch_scores(params, bank, patches, k);
    return ScoreSeries{aggregate_scores(per_patch, series.length(), params.window)};
}

}  // namespace paano
