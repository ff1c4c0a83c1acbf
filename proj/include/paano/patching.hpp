#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "paano/error.hpp"
#include "paano/series_io.hpp"

namespace paano {

inline constexpr double kInstanceNormEps = 1e-5;

// A w x d window. `start` is the 1-based time index of its first row.
struct Patch {
    RowMatrix data;
    std::size_t start = 1;

    std::size_t length() const { return static_cast<std::size_t>(data.rows()); }
    std::size_t channels() const { return static_cast<std::size_t>(data.cols()); }
};

// All unit-stride windows of a series. Values are held raw; normalization is
// applied when a patch is encoded.
class PatchSet {
public:
    PatchSet() = default;
    PatchSet(RowMatrix values, std::size_t w) : values_(std::move(values)), w_(w) {}

    std::size_t size() const { return static_cast<std::size_t>(values_.rows()) - w_ + 1; }
    std::size_t window() const { return w_; }
    std::size_t channels() const { return static_cast<std::size_t>(values_.cols()); }
    std::size_t series_length() const { return static_cast<std::size_t>(values_.rows()); }
    const RowMatrix& values() const { return values_; }

    // Raw block for the patch starting at 1-based `start`.
    auto block(std::size_t start) const {
        return values_.middleRows(static_cast<Eigen::Index>(start - 1), static_cast<Eigen::Index>(w_));
    }

    Patch at(std::size_t start) const { return Patch{RowMatrix(block(start)), start}; }

private:
    RowMatrix values_;
    std::size_t w_ = 0;
};

inline PatchSet extract_patches(const TimeSeries& series, std::size_t w) {
    if (w < 2) throw DataError("patch length must be at least 2, got " + std::to_string(w));
    if (series.length() < w) {
        throw DataError("series has " + std::to_string(series.length()) +
                        " steps; patch length " + std::to_string(w) + " needs at least " +
                        std::to_string(w) + " steps");
    }
    return PatchSet(series.values, w);
}

// Per-channel (x - mean) / sqrt(var + eps) with population variance. Writes the
// normalized channel c of `block` (w x d) to `out[0..w)`.
template <class Real, class Block>
void normalize_channel(const Block& block, Eigen::Index c, double eps, Real* out) {
    const Eigen::Index w = block.rows();
    double mean = 0.0;
    for (Eigen::Index t = 0; t < w; ++t) mean += block(t, c);
    mean /= static_cast<double>(w);
    double var = 0.0;
    for (Eigen::Index t = 0; t < w; ++t) {
        const double dev = block(t, c) - mean;
        var += dev * dev;
    }
    var /= static_cast<double>(w);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (Eigen::Index t = 0; t < w; ++t) out[t] = static_cast<Real>((block(t, c) - mean) * inv);
}

inline Patch instance_normalize(const Patch& patch, double eps = kInstanceNormEps) {
    if (!(eps >= 0.0)) throw DataError("instance normalization eps must be non-negative");
    Patch out{RowMatrix(patch.data.rows(), patch.data.cols()), patch.start};
    std::vector<double> column(patch.length());
    for (Eigen::Index c = 0; c < patch.data.cols(); ++c) {
        normalize_channel(patch.data, c, eps, column.data());
        for (Eigen::Index t = 0; t < patch.data.rows(); ++t) out.data(t, c) = column[static_cast<std::size_t>(t)];
    }
    return out;
}

}  // namespace paano
