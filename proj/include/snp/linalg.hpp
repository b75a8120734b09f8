#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "snp/tensor.hpp"

namespace snp {

// Uncentered second-moment matrix C = X * X^T of a layer's input features,
// accumulated over calibration batches (units as rows, samples as columns).
struct GramMatrix {
    std::string layer_id;
    Tensor2D C;                     // n x n, kept exactly symmetric
    std::size_t sample_count = 0;   // feature vectors accumulated so far

    std::size_t n() const { return C.rows(); }

    static GramMatrix zero(std::string layer_id, std::size_t n);

    // Symmetry within 1e-12 relative; throws ContractError otherwise.
    void require_symmetric() const;
};

// Unit-diagonal LDL factorization of a (permuted, ridged) Gram matrix:
// P C P^T = M_inv * diag(D) * M_inv^T, with M_inv unit lower-triangular.
struct SubspaceFactor {
    Tensor2D M_inv;                  // n x n unit lower-triangular
    std::vector<double> D;           // n subspace variances, all >= 0
    std::vector<std::size_t> perm;   // row i of the factored matrix is unit perm[i]

    std::size_t n() const { return D.size(); }
};

enum class Axis { Rows, Cols };

// Default ridge applied before LDL: C + ridge_scale * mean(diag C) * I.
inline constexpr double kDefaultRidgeScale = 1e-8;
// Pivots below kPivotFloorScale * mean(diag C) are clamped to that floor.
inline constexpr double kPivotFloorScale = 1e-12;
// Pivots below -kNotPsdScale * mean(diag C) abort the factorization.
inline constexpr double kNotPsdScale = 1e-8;
// Eigenvalues below eig_floor * lambda_max are clamped in sym_inverse_sqrt.
inline constexpr double kDefaultEigFloor = 1e-12;

// Returns a Gram with C' = C + batch * batch^T and sample_count incremented
// by the batch's column count. Accumulation is in real64 and preserves exact
// symmetry.
GramMatrix accumulate_gram(const GramMatrix& existing, const Tensor2D& batch_features);

// Unit-diagonal LDL of the ridged Gram. perm of the result is identity;
// callers that factor a permuted Gram set it afterwards. Throws NumericError
// when a pivot falls below the not-PSD threshold.
SubspaceFactor ldl_decompose(const GramMatrix& gram, double ridge_scale = kDefaultRidgeScale);

// The ridged matrix the factorization reconstructs (for diagnostics/tests).
Tensor2D ridged(const Tensor2D& C, double ridge_scale);

// L^-1 for unit lower-triangular L; result is unit lower-triangular too.
Tensor2D invert_unit_lower_triangular(const Tensor2D& L);

// Symmetric Z with Z*C*Z = I on the non-clamped eigenspace: C^(-1/2) via
// symmetric eigendecomposition, eigenvalues floored at eig_floor*lambda_max.
Tensor2D sym_inverse_sqrt(const GramMatrix& gram, double eig_floor = kDefaultEigFloor);

// Symmetric PSD square root C^(1/2) (negative eigenvalues clamped to zero).
Tensor2D sym_sqrt(const GramMatrix& gram);

// Reorder rows (result row i = input row perm[i]) or columns (result col j =
// input col perm[j]). Throws ContractError on repeated/out-of-range indices.
Tensor2D apply_permutation(const Tensor2D& t, std::span<const std::size_t> perm, Axis axis);

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);
std::vector<std::size_t> identity_permutation(std::size_t n);

// perm applied symmetrically to both axes: P C P^T.
Tensor2D permute_symmetric(const Tensor2D& C, std::span<const std::size_t> perm);

double mean_diagonal(const Tensor2D& C);

}  // namespace snp
