#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace snp {

// Dense row-major real64 matrix. The universal carrier for activations,
// weights, Gram matrices and factors throughout the library.
class Tensor2D {
  public:
    Tensor2D() = default;
    Tensor2D(std::size_t rows, std::size_t cols);  // zero-initialized
    Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);

    // Row-major literal, e.g. Tensor2D::from_rows({{1, 2}, {3, 4}}).
    static Tensor2D from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor2D identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool all_finite() const;
    // Throws DataError if any entry is NaN/Inf; `what` names the tensor in
    // the message.
    void require_finite(const char* what) const;

    Tensor2D transposed() const;

    bool operator==(const Tensor2D& other) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B. Throws ShapeError on inner-dimension mismatch.
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);

// A * A^T, computed exactly symmetric (upper triangle mirrored).
Tensor2D gram_of(const Tensor2D& a);

double frobenius_norm(const Tensor2D& a);

// ||a - b||_F / max(||b||_F, 1e-30)
double relative_frobenius_error(const Tensor2D& a, const Tensor2D& b);

double max_abs_diff(const Tensor2D& a, const Tensor2D& b);

}  // namespace snp
