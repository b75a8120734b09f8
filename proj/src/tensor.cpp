#include "snp/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "snp/errors.hpp"

namespace snp {

using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMat>;
using MutMap = Eigen::Map<EigenRowMat>;

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Tensor2D: data length " + std::to_string(data_.size()) +
                         " does not equal rows*cols = " + std::to_string(rows_ * cols_));
    }
}

Tensor2D Tensor2D::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Tensor2D t(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("Tensor2D::from_rows: ragged rows");
        }
        std::size_t j = 0;
        for (double v : row) t(i, j++) = v;
        ++i;
    }
    return t;
}

Tensor2D Tensor2D::identity(std::size_t n) {
    Tensor2D t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

bool Tensor2D::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor2D::require_finite(const char* what) const {
    if (!all_finite()) {
        throw DataError(std::string(what) + ": non-finite entries");
    }
}

Tensor2D Tensor2D::transposed() const {
    Tensor2D t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    }
    Tensor2D out(a.rows(), b.cols());
    if (a.rows() == 0 || b.cols() == 0 || a.cols() == 0) return out;
    ConstMap ma(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
    ConstMap mb(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    MutMap mo(out.data(), static_cast<Eigen::Index>(out.rows()),
              static_cast<Eigen::Index>(out.cols()));
    mo.noalias() = ma * mb;
    return out;
}

Tensor2D gram_of(const Tensor2D& a) {
    const std::size_t n = a.rows();
    Tensor2D out(n, n);
    if (n == 0) return out;
    ConstMap ma(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
    EigenRowMat g = ma * ma.transpose();
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

double frobenius_norm(const Tensor2D& a) {
    double s = 0.0;
    for (double v : a.storage()) s += v * v;
    return std::sqrt(s);
}

double relative_frobenius_error(const Tensor2D& a, const Tensor2D& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("relative_frobenius_error: shape mismatch");
    }
    double num = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a.storage()[k] - b.storage()[k];
        num += d * d;
    }
    const double den = std::max(frobenius_norm(b), 1e-30);
    return std::sqrt(num) / den;
}

double max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("max_abs_diff: shape mismatch");
    }
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        m = std::max(m, std::abs(a.storage()[k] - b.storage()[k]));
    }
    return m;
}

}  // namespace snp
