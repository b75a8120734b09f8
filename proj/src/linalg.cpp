#include "snp/linalg.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "snp/errors.hpp"

namespace snp {

namespace {

using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_permutation(std::span<const std::size_t> perm, std::size_t n) {
    if (perm.size() != n) {
        throw ContractError("permutation length " + std::to_string(perm.size()) +
                            " does not match axis size " + std::to_string(n));
    }
    std::vector<bool> seen(n, false);
    for (std::size_t p : perm) {
        if (p >= n) {
            throw ContractError("permutation index " + std::to_string(p) + " out of range");
        }
        if (seen[p]) {
            throw ContractError("permutation repeats index " + std::to_string(p));
        }
        seen[p] = true;
    }
}

// Symmetric eigendecomposition with convergence check.
void sym_eigen(const Tensor2D& C, Eigen::VectorXd& evals, EigenRowMat& evecs) {
    Eigen::Map<const EigenRowMat> m(C.data(), static_cast<Eigen::Index>(C.rows()),
                                    static_cast<Eigen::Index>(C.cols()));
    Eigen::SelfAdjointEigenSolver<EigenRowMat> solver(m);
    if (solver.info() != Eigen::Success) {
        throw NumericError("symmetric eigendecomposition failed to converge");
    }
    evals = solver.eigenvalues();
    evecs = solver.eigenvectors();
}

}  // namespace

GramMatrix GramMatrix::zero(std::string layer_id, std::size_t n) {
    return GramMatrix{std::move(layer_id), Tensor2D(n, n), 0};
}

void GramMatrix::require_symmetric() const {
    if (C.rows() != C.cols()) {
        throw ContractError("GramMatrix " + layer_id + ": not square");
    }
    const double scale = std::max(frobenius_norm(C), 1e-30);
    for (std::size_t i = 0; i < C.rows(); ++i) {
        for (std::size_t j = i + 1; j < C.cols(); ++j) {
            if (std::abs(C(i, j) - C(j, i)) > 1e-12 * scale) {
                throw ContractError("GramMatrix " + layer_id + ": asymmetric at (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
}

GramMatrix accumulate_gram(const GramMatrix& existing, const Tensor2D& batch_features) {
    if (batch_features.rows() != existing.C.rows()) {
        throw ShapeError("accumulate_gram: batch has " + std::to_string(batch_features.rows()) +
                         " units, Gram expects " + std::to_string(existing.C.rows()));
    }
    batch_features.require_finite("accumulate_gram: batch_features");

    GramMatrix out = existing;
    if (batch_features.cols() == 0) return out;

    const Tensor2D update = gram_of(batch_features);
    for (std::size_t k = 0; k < out.C.size(); ++k) {
        out.C.storage()[k] += update.storage()[k];
    }
    out.sample_count += batch_features.cols();
    out.C.require_finite("accumulate_gram: accumulated Gram");
    return out;
}

double mean_diagonal(const Tensor2D& C) {
    if (C.rows() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < C.rows(); ++i) s += C(i, i);
    return s / static_cast<double>(C.rows());
}

Tensor2D ridged(const Tensor2D& C, double ridge_scale) {
    Tensor2D out = C;
    const double lambda = ridge_scale * mean_diagonal(C);
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) += lambda;
    return out;
}

SubspaceFactor ldl_decompose(const GramMatrix& gram, double ridge_scale) {
    if (ridge_scale < 0.0) {
        throw ContractError("ldl_decompose: ridge_scale must be >= 0");
    }
    gram.require_symmetric();
    gram.C.require_finite("ldl_decompose: Gram");

    const std::size_t n = gram.n();
    const double diag_mean = mean_diagonal(gram.C);
    const double pivot_floor = kPivotFloorScale * diag_mean;
    const double not_psd_threshold = -kNotPsdScale * diag_mean;
    const Tensor2D C = ridged(gram.C, ridge_scale);

    SubspaceFactor f;
    f.M_inv = Tensor2D::identity(n);
    f.D.assign(n, 0.0);
    f.perm = identity_permutation(n);

    Tensor2D& L = f.M_inv;
    std::vector<double> ld(n);  // ld[k] = L(j,k) * D[k] for the current column j
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < j; ++k) ld[k] = L(j, k) * f.D[k];
        double pivot = C(j, j);
        for (std::size_t k = 0; k < j; ++k) pivot -= L(j, k) * ld[k];

        if (pivot < not_psd_threshold) {
            throw NumericError("ldl_decompose: Gram " + gram.layer_id +
                               " is not PSD at pivot " + std::to_string(j) +
                               " (value " + std::to_string(pivot) + ")");
        }
        if (pivot < pivot_floor) pivot = pivot_floor;
        f.D[j] = pivot;

        for (std::size_t i = j + 1; i < n; ++i) {
            double v = C(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= L(i, k) * ld[k];
            L(i, j) = pivot > 0.0 ? v / pivot : 0.0;
        }
    }
    return f;
}

Tensor2D invert_unit_lower_triangular(const Tensor2D& L) {
    const std::size_t n = L.rows();
    if (L.cols() != n) {
        throw ContractError("invert_unit_lower_triangular: matrix not square");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (L(i, i) != 1.0) {
            throw ContractError("invert_unit_lower_triangular: diagonal entry " +
                                std::to_string(i) + " is not 1");
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            if (L(i, j) != 0.0) {
                throw ContractError("invert_unit_lower_triangular: nonzero above diagonal at (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }

    // Column-by-column forward substitution; X stays unit lower-triangular.
    Tensor2D X = Tensor2D::identity(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = L(i, j);  // k = j term (X(j,j) = 1)
            for (std::size_t k = j + 1; k < i; ++k) s += L(i, k) * X(k, j);
            X(i, j) = -s;
        }
    }
    return X;
}

Tensor2D sym_inverse_sqrt(const GramMatrix& gram, double eig_floor) {
    gram.require_symmetric();
    const std::size_t n = gram.n();
    Eigen::VectorXd evals;
    EigenRowMat evecs;
    sym_eigen(gram.C, evals, evecs);

    const double lambda_max = evals.size() > 0 ? evals.maxCoeff() : 0.0;
    const double floor = lambda_max > 0.0 ? eig_floor * lambda_max : eig_floor;
    Eigen::VectorXd inv_sqrt(evals.size());
    for (Eigen::Index i = 0; i < evals.size(); ++i) {
        inv_sqrt[i] = 1.0 / std::sqrt(std::max(evals[i], floor));
    }

    EigenRowMat Z = evecs * inv_sqrt.asDiagonal() * evecs.transpose();
    Tensor2D out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
        for (std::size_t j = i + 1; j < n; ++j) {
            // exact symmetry
            const double v = 0.5 * (Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +
                                    Z(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

Tensor2D sym_sqrt(const GramMatrix& gram) {
    gram.require_symmetric();
    const std::size_t n = gram.n();
    Eigen::VectorXd evals;
    EigenRowMat evecs;
    sym_eigen(gram.C, evals, evecs);

    Eigen::VectorXd sqrt_vals(evals.size());
    for (Eigen::Index i = 0; i < evals.size(); ++i) {
        sqrt_vals[i] = std::sqrt(std::max(evals[i], 0.0));
    }
    EigenRowMat S = evecs * sqrt_vals.asDiagonal() * evecs.transpose();
    Tensor2D out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +
                                    S(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

Tensor2D apply_permutation(const Tensor2D& t, std::span<const std::size_t> perm, Axis axis) {
    if (axis == Axis::Rows) {
        check_permutation(perm, t.rows());
        Tensor2D out(t.rows(), t.cols());
        for (std::size_t i = 0; i < t.rows(); ++i) {
            const double* src = t.data() + perm[i] * t.cols();
            std::copy(src, src + t.cols(), out.data() + i * t.cols());
        }
        return out;
    }
    check_permutation(perm, t.cols());
    Tensor2D out(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.rows(); ++i) {
        for (std::size_t j = 0; j < t.cols(); ++j) {
            out(i, j) = t(i, perm[j]);
        }
    }
    return out;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
    check_permutation(perm, perm.size());
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
}

std::vector<std::size_t> identity_permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    return p;
}

Tensor2D permute_symmetric(const Tensor2D& C, std::span<const std::size_t> perm) {
    return apply_permutation(apply_permutation(C, perm, Axis::Rows), perm, Axis::Cols);
}

}  // namespace snp
