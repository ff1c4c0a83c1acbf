#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "paano/error.hpp"

namespace paano {

template <class Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
template <class Real>
using MatrixMap = Eigen::Map<Matrix<Real>>;
template <class Real>
using ConstMatrixMap = Eigen::Map<const Matrix<Real>>;

// Dense parameter buffer. `grad` is absent until a backward pass writes it;
// the optimizer skips tensors without a gradient.
template <class Real>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<Real> data;
    std::optional<std::vector<Real>> grad;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, Real fill = Real(0))
        : shape(std::move(dims)), data(element_count(shape), fill) {}

    static std::size_t element_count(const std::vector<std::size_t>& dims) {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const { return data.size(); }

    // Views the buffer as rows x (size / rows), row-major.
    MatrixMap<Real> matrix(std::size_t rows) {
        return MatrixMap<Real>(data.data(), static_cast<Eigen::Index>(rows),
                               static_cast<Eigen::Index>(data.size() / rows));
    }
    ConstMatrixMap<Real> matrix(std::size_t rows) const {
        return ConstMatrixMap<Real>(data.data(), static_cast<Eigen::Index>(rows),
                                    static_cast<Eigen::Index>(data.size() / rows));
    }
    Eigen::Map<Vector<Real>> vector() { return {data.data(), static_cast<Eigen::Index>(data.size())}; }
    Eigen::Map<const Vector<Real>> vector() const {
        return {data.data(), static_cast<Eigen::Index>(data.size())};
    }

    // Allocates (zeroed) gradient storage if absent and returns it.
    std::vector<Real>& ensure_grad() {
        if (!grad) grad.emplace(data.size(), Real(0));
        return *grad;
    }
    MatrixMap<Real> grad_matrix(std::size_t rows) {
        auto& g = ensure_grad();
        return MatrixMap<Real>(g.data(), static_cast<Eigen::Index>(rows),
                               static_cast<Eigen::Index>(g.size() / rows));
    }
    Eigen::Map<Vector<Real>> grad_vector() {
        auto& g = ensure_grad();
        return {g.data(), static_cast<Eigen::Index>(g.size())};
    }
    void clear_grad() { grad.reset(); }

    template <class Other>
    Tensor<Other> cast() const {
        Tensor<Other> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace paano
