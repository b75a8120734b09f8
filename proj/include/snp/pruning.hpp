#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "snp/linalg.hpp"
#include "snp/model.hpp"
#include "snp/tensor.hpp"

namespace snp {

enum class ScoreMethod { Saw, UnnormZca, SawTilde, Random };

const char* to_string(ScoreMethod m);
ScoreMethod score_method_from_string(const std::string& s);

struct ImportanceScores {
    std::string layer_id;
    ScoreMethod method = ScoreMethod::UnnormZca;
    std::vector<double> scores;  // one per input unit, finite
};

enum class PruneMode { Uniform, VarianceCutoff, Explicit };

const char* to_string(PruneMode m);
PruneMode prune_mode_from_string(const std::string& s);

struct PruneSpec {
    PruneMode mode = PruneMode::Uniform;
    double uniform_ratio = 0.0;                    // fraction of units to remove, [0,1]
    double variance_threshold = 0.0;               // tau, fraction of variance to remove, [0,1]
    std::map<std::string, std::size_t> explicit_keep;
    std::size_t min_keep = 1;

    void validate() const;
};

// Everything needed to prune one layer: the importance permutation (most to
// least important), the subspace factor of the permuted Gram, the variance
// tail fractions and the chosen keep count.
struct LayerPrunePlan {
    std::string layer_id;
    ScoreMethod method = ScoreMethod::UnnormZca;
    std::vector<std::size_t> perm;             // perm[i] = original unit at importance rank i
    std::size_t keep = 0;
    SubspaceFactor factor;                     // LDL of the permuted (ridged) Gram
    std::vector<double> cumulative_importance; // tail variance fractions, [0] == 1

    // Kept original unit indices, ascending (the pruned layer's column order).
    std::vector<std::size_t> kept_units() const;
};

// Column-wise L1 norms of the consuming weights: score_j = sum_i |W_ij|.
ImportanceScores score_saw(const std::string& layer_id, const Tensor2D& consumer_W);

// Redundancy score from the ZCA inverse square root Z = C^(-1/2): the power
// each unit retains once every other unit has explained what it can,
// 1 / (Z*Z)_jj. Uncorrelated units score their raw variance; duplicated
// units score ~0.
ImportanceScores score_unnorm_zca(const GramMatrix& gram, double eig_floor = kDefaultEigFloor);

// SAW measured in the orthonormalized input basis: column sums of
// |W * C^(1/2)|.
ImportanceScores score_saw_tilde(const std::string& layer_id, const Tensor2D& consumer_W,
                                 const GramMatrix& gram);

// Seeded random scores (baseline ordering).
ImportanceScores score_random(const std::string& layer_id, std::size_t units, std::uint64_t seed);

// Stable descending sort of scores; ties break toward the lower original index.
std::vector<std::size_t> importance_permutation(const ImportanceScores& scores);

// Sorts units by score, factors the permuted Gram, derives the cumulative
// variance fractions and resolves the keep count for the given spec.
LayerPrunePlan build_plan(const ImportanceScores& scores, const GramMatrix& gram,
                          const PruneSpec& spec, double ridge_scale = kDefaultRidgeScale);

// The n x keep recovery matrix A with W_hat = W * A. With reconstruction the
// least-squares recovery of pruned activity is folded in
// (A = P^-1 * M_inv[:, :k] * M[:k, :k] * P[:k, kept]); without it A is the
// plain column-selection matrix of the kept units.
Tensor2D recovery_matrix(const LayerPrunePlan& plan, bool reconstruct = true);

// W_hat = W * A; kept columns are the top-keep units by score, in ascending
// original-index order.
Tensor2D prune_layer(const Tensor2D& W, const LayerPrunePlan& plan, bool reconstruct = true);

struct LayerReportEntry {
    std::string layer_id;
    std::size_t n_before = 0;
    std::size_t keep = 0;
    double retained_variance_fraction = 1.0;
};

struct ReportTotals {
    std::uint64_t flops_before = 0;
    std::uint64_t flops_after = 0;
    std::uint64_t params_before = 0;
    std::uint64_t params_after = 0;
    double speedup = 1.0;
};

struct ReportMetrics {
    double acc_before = 0.0;
    double acc_after = 0.0;
    double delta = 0.0;
};

struct PruneReport {
    std::vector<LayerReportEntry> per_layer;
    ReportTotals totals;
    std::optional<ReportMetrics> metrics;
};

struct PruneOptions {
    ScoreMethod method = ScoreMethod::UnnormZca;
    double ridge_scale = kDefaultRidgeScale;
    std::uint64_t seed = 0;          // for ScoreMethod::Random
    bool reconstruct = true;         // fold the LLS recovery into the weights
    bool absorb_bias = false;        // grams carry a trailing constant unit
};

struct PruneResult {
    Network net;
    PruneReport report;
    std::vector<LayerPrunePlan> plans;
};

// Prunes every weighted layer whose input is not the raw data, using one
// Gram per layer (keyed by layer name) collected from the ORIGINAL network.
// Consumer weights are reparameterized via the recovery matrix; the
// producer's output units/channels and bias entries are deleted.
PruneResult prune_network_from_grams(const Network& net,
                                     const std::map<std::string, GramMatrix>& grams,
                                     const PruneSpec& spec, const PruneOptions& options);

// Convenience wrapper: accumulates the Grams from captured activations first.
PruneResult prune_network(const Network& net, const ActivationCapture& captures,
                          const PruneSpec& spec, const PruneOptions& options);

// Appends the constant always-kept unit row (value 1) to captured features.
Tensor2D with_bias_row(const Tensor2D& features);

}  // namespace snp
