#include "snp/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "snp/errors.hpp"
#include "snp/rng.hpp"

namespace snp {

const char* to_string(ScoreMethod m) {
    switch (m) {
        case ScoreMethod::Saw: return "saw";
        case ScoreMethod::UnnormZca: return "unnorm_zca";
        case ScoreMethod::SawTilde: return "saw_tilde";
        case ScoreMethod::Random: return "random";
    }
    return "?";
}

ScoreMethod score_method_from_string(const std::string& s) {
    if (s == "saw") return ScoreMethod::Saw;
    if (s == "unnorm_zca") return ScoreMethod::UnnormZca;
    if (s == "saw_tilde") return ScoreMethod::SawTilde;
    if (s == "random") return ScoreMethod::Random;
    throw ContractError("unknown score method: " + s);
}

const char* to_string(PruneMode m) {
    switch (m) {
        case PruneMode::Uniform: return "uniform";
        case PruneMode::VarianceCutoff: return "variance_cutoff";
        case PruneMode::Explicit: return "explicit";
    }
    return "?";
}

PruneMode prune_mode_from_string(const std::string& s) {
    if (s == "uniform") return PruneMode::Uniform;
    if (s == "variance_cutoff") return PruneMode::VarianceCutoff;
    if (s == "explicit") return PruneMode::Explicit;
    throw ContractError("unknown prune mode: " + s);
}

void PruneSpec::validate() const {
    if (min_keep < 1) throw ContractError("PruneSpec: min_keep must be >= 1");
    switch (mode) {
        case PruneMode::Uniform:
            if (uniform_ratio < 0.0 || uniform_ratio > 1.0) {
                throw ContractError("PruneSpec: uniform_ratio must be in [0,1]");
            }
            break;
        case PruneMode::VarianceCutoff:
            if (variance_threshold < 0.0 || variance_threshold > 1.0) {
                throw ContractError("PruneSpec: variance_threshold must be in [0,1]");
            }
            break;
        case PruneMode::Explicit:
            if (explicit_keep.empty()) {
                throw ContractError("PruneSpec: explicit mode needs explicit_keep entries");
            }
            break;
    }
}

std::vector<std::size_t> LayerPrunePlan::kept_units() const {
    const std::size_t k_f = keep + (bias_unit ? 1 : 0);
    std::vector<std::size_t> kept;
    kept.reserve(keep);
    for (std::size_t r = 0; r < k_f; ++r) {
        if (bias_unit && perm[r] == *bias_unit) continue;
        kept.push_back(perm[r]);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

ImportanceScores score_saw(const std::string& layer_id, const Tensor2D& consumer_W) {
    consumer_W.require_finite("score_saw: W");
    ImportanceScores s{layer_id, ScoreMethod::Saw, std::vector<double>(consumer_W.cols(), 0.0)};
    for (std::size_t i = 0; i < consumer_W.rows(); ++i) {
        for (std::size_t j = 0; j < consumer_W.cols(); ++j) {
            s.scores[j] += std::abs(consumer_W(i, j));
        }
    }
    return s;
}

ImportanceScores score_unnorm_zca(const GramMatrix& gram, double eig_floor) {
    const Tensor2D Z = sym_inverse_sqrt(gram, eig_floor);
    const std::size_t n = gram.n();
    ImportanceScores s{gram.layer_id, ScoreMethod::UnnormZca, std::vector<double>(n, 0.0)};
    // (Z*Z)_jj = sum_k Z_jk^2; its reciprocal is the unit's non-redundant power.
    for (std::size_t j = 0; j < n; ++j) {
        double q = 0.0;
        for (std::size_t k = 0; k < n; ++k) q += Z(j, k) * Z(j, k);
        s.scores[j] = 1.0 / q;
    }
    return s;
}

ImportanceScores score_saw_tilde(const std::string& layer_id, const Tensor2D& consumer_W,
                                 const GramMatrix& gram) {
    if (consumer_W.cols() != gram.n()) {
        throw ContractError("score_saw_tilde: W has " + std::to_string(consumer_W.cols()) +
                            " columns but Gram is " + std::to_string(gram.n()) + "x" +
                            std::to_string(gram.n()));
    }
    const Tensor2D w_tilde = matmul(consumer_W, sym_sqrt(gram));
    ImportanceScores s = score_saw(layer_id, w_tilde);
    s.method = ScoreMethod::SawTilde;
    return s;
}

ImportanceScores score_random(const std::string& layer_id, std::size_t units,
                              std::uint64_t seed) {
    Rng rng(derive_seed(seed, layer_id));
    ImportanceScores s{layer_id, ScoreMethod::Random, std::vector<double>(units, 0.0)};
    for (double& v : s.scores) v = rng.next_double();
    return s;
}

std::vector<std::size_t> importance_permutation(const ImportanceScores& scores) {
    for (double v : scores.scores) {
        if (!std::isfinite(v)) {
            throw DataError("importance scores for " + scores.layer_id + " contain non-finite values");
        }
    }
    std::vector<std::size_t> perm = identity_permutation(scores.scores.size());
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
        return scores.scores[a] > scores.scores[b];
    });
    return perm;
}

namespace {

// round-half-away-from-zero keep count for uniform mode
std::size_t uniform_keep(double ratio, std::size_t n) {
    const double raw = std::round((1.0 - ratio) * static_cast<double>(n));
    return raw < 0.0 ? 0 : static_cast<std::size_t>(raw);
}

std::size_t clamp_keep(std::size_t keep, std::size_t min_keep, std::size_t n) {
    return std::min(std::max(keep, min_keep), n);
}

}  // namespace

LayerPrunePlan build_plan(const ImportanceScores& scores, const GramMatrix& gram,
                          const PruneSpec& spec, double ridge_scale) {
    spec.validate();
    if (gram.sample_count == 0) {
        throw ContractError("build_plan: Gram for " + gram.layer_id + " has no samples");
    }
    const std::size_t n_real = scores.scores.size();
    const bool absorb = gram.n() == n_real + 1;
    if (!absorb && gram.n() != n_real) {
        throw ContractError("build_plan: " + std::to_string(n_real) + " scores vs " +
                            std::to_string(gram.n()) + "-unit Gram for " + gram.layer_id);
    }
    if (scores.layer_id != gram.layer_id) {
        throw ContractError("build_plan: scores are for " + scores.layer_id + ", Gram for " +
                            gram.layer_id);
    }

    LayerPrunePlan plan;
    plan.layer_id = gram.layer_id;
    plan.method = scores.method;

    // constant unit (when present) is pinned to the top importance rank
    plan.perm = importance_permutation(scores);
    if (absorb) {
        plan.bias_unit = n_real;
        plan.perm.insert(plan.perm.begin(), n_real);
    }

    plan.factor = ldl_decompose(
        GramMatrix{gram.layer_id, permute_symmetric(gram.C, plan.perm), gram.sample_count},
        ridge_scale);
    plan.factor.perm = plan.perm;

    // tail variance fractions over the real units' subspace variances
    const std::size_t var_start = absorb ? 1 : 0;
    plan.cumulative_importance.assign(n_real, 0.0);
    double tail = 0.0;
    for (std::size_t i = n_real; i-- > 0;) {
        tail += plan.factor.D[var_start + i];
        plan.cumulative_importance[i] = tail;
    }
    const double total = plan.cumulative_importance.empty() ? 0.0 : plan.cumulative_importance[0];
    if (total > 0.0) {
        for (double& v : plan.cumulative_importance) v /= total;
        plan.cumulative_importance[0] = 1.0;
    }

    switch (spec.mode) {
        case PruneMode::Uniform:
            plan.keep = clamp_keep(uniform_keep(spec.uniform_ratio, n_real), spec.min_keep, n_real);
            break;
        case PruneMode::VarianceCutoff: {
            // smallest keep whose tail fraction falls below tau (tail at n is 0)
            std::size_t k = 0;
            while (k < n_real && plan.cumulative_importance[k] >= spec.variance_threshold) ++k;
            if (spec.variance_threshold <= 0.0) k = n_real;
            plan.keep = clamp_keep(k, spec.min_keep, n_real);
            break;
        }
        case PruneMode::Explicit: {
            const auto it = spec.explicit_keep.find(gram.layer_id);
            if (it == spec.explicit_keep.end()) {
                throw ContractError("build_plan: no explicit keep count for layer " +
                                    gram.layer_id);
            }
            if (it->second > n_real) {
                throw ContractError("build_plan: explicit keep " + std::to_string(it->second) +
                                    " exceeds unit count " + std::to_string(n_real) + " for " +
                                    gram.layer_id);
            }
            plan.keep = clamp_keep(it->second, spec.min_keep, n_real);
            break;
        }
    }
    return plan;
}

Tensor2D recovery_matrix(const LayerPrunePlan& plan, bool reconstruct) {
    const std::size_t n_f = plan.factor.n();
    const std::size_t k_f = plan.keep + (plan.bias_unit ? 1 : 0);
    if (k_f < 1 || k_f > n_f) {
        throw ContractError("recovery_matrix: keep " + std::to_string(plan.keep) +
                            " out of range for " + std::to_string(n_f) + " units");
    }

    // B = M_inv[:, :k] * M[:k, :k] in the importance-permuted basis; without
    // reconstruction both factors degenerate to the identity and B selects
    // the first k subspace coordinates.
    Tensor2D B(n_f, k_f);
    if (reconstruct) {
        const Tensor2D M = invert_unit_lower_triangular(plan.factor.M_inv);
        for (std::size_t i = 0; i < n_f; ++i) {
            for (std::size_t j = 0; j < k_f; ++j) {
                double acc = 0.0;
                // M_inv is lower-triangular, M too: sum over c <= min(i, j)..j
                for (std::size_t c = 0; c <= j && c < k_f; ++c) {
                    if (c > i) break;
                    acc += plan.factor.M_inv(i, c) * M(j, c) * 0.0;  // placeholder
                }
                B(i, j) = acc;
            }
        }
        // recompute properly: B = M_inv[:, :k] * Mtop where Mtop = M[:k, :k]
        for (std::size_t i = 0; i < n_f; ++i) {
            for (std::size_t j = 0; j < k_f; ++j) {
                double acc = 0.0;
                const std::size_t cmax = std::min(i, k_f - 1);
                for (std::size_t c = j; c <= cmax; ++c) {
                    acc += plan.factor.M_inv(i, c) * M(c, j);
                }
                B(i, j) = acc;
            }
        }
    } else {
        for (std::size_t j = 0; j < k_f; ++j) B(j, j) = 1.0;
    }

    // un-permute rows and order columns by ascending original unit index
    std::vector<std::size_t> kept_sorted(plan.perm.begin(),
                                         plan.perm.begin() + static_cast<std::ptrdiff_t>(k_f));
    std::sort(kept_sorted.begin(), kept_sorted.end());
    std::vector<std::size_t> col_of_rank(k_f);
    for (std::size_t r = 0; r < k_f; ++r) {
        const auto it = std::lower_bound(kept_sorted.begin(), kept_sorted.end(), plan.perm[r]);
        col_of_rank[r] = static_cast<std::size_t>(it - kept_sorted.begin());
    }
    const std::vector<std::size_t> rank_of = inverse_permutation(plan.perm);

    Tensor2D A(n_f, k_f);
    for (std::size_t u = 0; u < n_f; ++u) {
        for (std::size_t r = 0; r < k_f; ++r) {
            A(u, col_of_rank[r]) = B(rank_of[u], r);
        }
    }
    return A;
}

Tensor2D prune_layer(const Tensor2D& W, const LayerPrunePlan& plan, bool reconstruct) {
    if (plan.bias_unit) {
        throw ContractError("prune_layer: bias-absorbing plans are handled by prune_network");
    }
    if (W.cols() != plan.factor.n()) {
        throw ContractError("prune_layer: W has " + std::to_string(W.cols()) +
                            " columns, plan covers " + std::to_string(plan.factor.n()) +
                            " units");
    }
    return matmul(W, recovery_matrix(plan, reconstruct));
}

Tensor2D with_bias_row(const Tensor2D& features) {
    Tensor2D out(features.rows() + 1, features.cols());
    std::copy(features.storage().begin(), features.storage().end(), out.data());
    for (std::size_t c = 0; c < features.cols(); ++c) out(features.rows(), c) = 1.0;
    return out;
}

namespace {

// Weight matrix whose columns line up with a site's prunable units.
Tensor2D consumer_matrix(const Layer& layer, const PruneSite& site) {
    if (site.kind == PruneSite::Kind::DenseUnits || site.kind == PruneSite::Kind::None) {
        return std::get<DenseLayer>(layer.op).W;
    }
    if (site.kind == PruneSite::Kind::ConvChannels) {
        const auto& c = std::get<Conv2dLayer>(layer.op);
        Tensor2D m(c.out_ch * c.kh * c.kw, c.in_ch);
        for (std::size_t o = 0; o < c.out_ch; ++o) {
            for (std::size_t ch = 0; ch < c.in_ch; ++ch) {
                for (std::size_t y = 0; y < c.kh; ++y) {
                    for (std::size_t x = 0; x < c.kw; ++x) {
                        m((o * c.kh + y) * c.kw + x, ch) = c.k(o, ch, y, x);
                    }
                }
            }
        }
        return m;
    }
    // FlattenedChannels: W is m x (C * group); gather per-channel columns
    const auto& d = std::get<DenseLayer>(layer.op);
    Tensor2D m(d.W.rows() * site.group, site.units);
    for (std::size_t r = 0; r < d.W.rows(); ++r) {
        for (std::size_t ch = 0; ch < site.units; ++ch) {
            for (std::size_t p = 0; p < site.group; ++p) {
                m(r * site.group + p, ch) = d.W(r, ch * site.group + p);
            }
        }
    }
    return m;
}

ImportanceScores compute_scores(const std::string& layer_id, const Layer& layer,
                                const PruneSite& site, const GramMatrix& gram,
                                const PruneOptions& options) {
    const bool absorb = options.absorb_bias;
    switch (options.method) {
        case ScoreMethod::Saw: {
            ImportanceScores s = score_saw(layer_id, consumer_matrix(layer, site));
            return s;
        }
        case ScoreMethod::UnnormZca: {
            // with a constant unit present, score against the full augmented
            // Gram (centered residuals) and drop the constant's entry
            ImportanceScores s = score_unnorm_zca(gram);
            if (absorb) s.scores.resize(site.units);
            return s;
        }
        case ScoreMethod::SawTilde: {
            GramMatrix real = gram;
            if (absorb) {
                Tensor2D sub(site.units, site.units);
                for (std::size_t i = 0; i < site.units; ++i)
                    for (std::size_t j = 0; j < site.units; ++j) sub(i, j) = gram.C(i, j);
                real.C = std::move(sub);
            }
            return score_saw_tilde(layer_id, consumer_matrix(layer, site), real);
        }
        case ScoreMethod::Random:
            return score_random(layer_id, site.units, options.seed);
    }
    throw ContractError("compute_scores: unreachable");
}

void reparameterize_consumer(Layer& layer, const PruneSite& site, const Tensor2D& A,
                             bool absorb) {
    if (site.kind == PruneSite::Kind::DenseUnits) {
        auto& d = std::get<DenseLayer>(layer.op);
        if (absorb) {
            // augmented [W | b] * A_aug; last column becomes the new bias
            Tensor2D aug(d.W.rows(), d.W.cols() + 1);
            for (std::size_t r = 0; r < d.W.rows(); ++r) {
                for (std::size_t c = 0; c < d.W.cols(); ++c) aug(r, c) = d.W(r, c);
                aug(r, d.W.cols()) = d.b[r];
            }
            const Tensor2D pruned = matmul(aug, A);
            Tensor2D w(pruned.rows(), pruned.cols() - 1);
            for (std::size_t r = 0; r < pruned.rows(); ++r) {
                for (std::size_t c = 0; c + 1 < pruned.cols(); ++c) w(r, c) = pruned(r, c);
                d.b[r] = pruned(r, pruned.cols() - 1);
            }
            d.W = std::move(w);
        } else {
            d.W = matmul(d.W, A);
        }
        return;
    }
    if (site.kind == PruneSite::Kind::ConvChannels) {
        auto& c = std::get<Conv2dLayer>(layer.op);
        const std::size_t kept = A.cols();
        std::vector<double> mixed(c.out_ch * kept * c.kh * c.kw, 0.0);
        for (std::size_t o = 0; o < c.out_ch; ++o) {
            for (std::size_t nc = 0; nc < kept; ++nc) {
                for (std::size_t ch = 0; ch < c.in_ch; ++ch) {
                    const double a = A(ch, nc);
                    if (a == 0.0) continue;
                    for (std::size_t y = 0; y < c.kh; ++y) {
                        for (std::size_t x = 0; x < c.kw; ++x) {
                            mixed[((o * kept + nc) * c.kh + y) * c.kw + x] +=
                                a * c.k(o, ch, y, x);
                        }
                    }
                }
            }
        }
        c.kernel = std::move(mixed);
        c.in_ch = kept;
        return;
    }
    // FlattenedChannels: per spatial position, mix the channel blocks by A
    auto& d = std::get<DenseLayer>(layer.op);
    const std::size_t kept = A.cols();
    Tensor2D w(d.W.rows(), kept * site.group);
    for (std::size_t r = 0; r < d.W.rows(); ++r) {
        for (std::size_t nc = 0; nc < kept; ++nc) {
            for (std::size_t ch = 0; ch < site.units; ++ch) {
                const double a = A(ch, nc);
                if (a == 0.0) continue;
                for (std::size_t p = 0; p < site.group; ++p) {
                    w(r, nc * site.group + p) += a * d.W(r, ch * site.group + p);
                }
            }
        }
    }
    d.W = std::move(w);
}

void shrink_producer(Layer& layer, const std::vector<std::size_t>& kept) {
    if (auto* d = std::get_if<DenseLayer>(&layer.op)) {
        Tensor2D w(kept.size(), d->W.cols());
        std::vector<double> b(kept.size());
        for (std::size_t r = 0; r < kept.size(); ++r) {
            for (std::size_t c = 0; c < d->W.cols(); ++c) w(r, c) = d->W(kept[r], c);
            b[r] = d->b[kept[r]];
        }
        d->W = std::move(w);
        d->b = std::move(b);
        return;
    }
    auto& c = std::get<Conv2dLayer>(layer.op);
    const std::size_t slice = c.in_ch * c.kh * c.kw;
    std::vector<double> kernel(kept.size() * slice);
    std::vector<double> b(kept.size());
    for (std::size_t r = 0; r < kept.size(); ++r) {
        std::copy(c.kernel.begin() + static_cast<std::ptrdiff_t>(kept[r] * slice),
                  c.kernel.begin() + static_cast<std::ptrdiff_t>((kept[r] + 1) * slice),
                  kernel.begin() + static_cast<std::ptrdiff_t>(r * slice));
        b[r] = c.b[kept[r]];
    }
    c.kernel = std::move(kernel);
    c.b = std::move(b);
    c.out_ch = kept.size();
}

}  // namespace

PruneResult prune_network_from_grams(const Network& net,
                                     const std::map<std::string, GramMatrix>& grams,
                                     const PruneSpec& spec, const PruneOptions& options) {
    net.validate();
    spec.validate();

    PruneResult result;
    result.net = net;
    const auto [flops_before, params_before] = count_flops_params(net);

    for (const auto& [idx, site] : net.prune_sites()) {
        const std::string& layer_id = net.layers[idx].name;
        LayerReportEntry entry{layer_id, site.units, site.units, 1.0};
        if (site.kind != PruneSite::Kind::None) {
            const auto it = grams.find(layer_id);
            if (it == grams.end()) {
                throw ContractError("prune_network: no Gram/capture for layer " + layer_id);
            }
            const GramMatrix& gram = it->second;
            const bool absorb = options.absorb_bias;
            if (absorb && site.kind != PruneSite::Kind::DenseUnits) {
                throw ContractError("prune_network: absorb_bias supports dense unit sites only (" +
                                    layer_id + ")");
            }
            const std::size_t expect = site.units + (absorb ? 1 : 0);
            if (gram.n() != expect) {
                throw ContractError("prune_network: Gram for " + layer_id + " is " +
                                    std::to_string(gram.n()) + "x" + std::to_string(gram.n()) +
                                    ", layer expects " + std::to_string(expect));
            }

            const ImportanceScores scores =
                compute_scores(layer_id, net.layers[idx], site, gram, options);
            LayerPrunePlan plan = build_plan(scores, gram, spec, options.ridge_scale);
            const Tensor2D A = recovery_matrix(plan, options.reconstruct);

            reparameterize_consumer(result.net.layers[idx], site, A, absorb && plan.bias_unit.has_value());
            shrink_producer(result.net.layers[static_cast<std::size_t>(site.producer)],
                            plan.kept_units());

            entry.keep = plan.keep;
            entry.retained_variance_fraction =
                plan.keep < plan.cumulative_importance.size()
                    ? 1.0 - plan.cumulative_importance[plan.keep]
                    : 1.0;
            result.plans.push_back(std::move(plan));
        }
        result.report.per_layer.push_back(std::move(entry));
    }

    try {
        result.net.validate();
    } catch (const Error& e) {
        throw std::logic_error(std::string("internal: pruned network fails shape validation: ") +
                               e.what());
    }

    const auto [flops_after, params_after] = count_flops_params(result.net);
    result.report.totals =
        ReportTotals{flops_before, flops_after, params_before, params_after,
                     flops_after > 0 ? static_cast<double>(flops_before) /
                                           static_cast<double>(flops_after)
                                     : 1.0};
    return result;
}

PruneResult prune_network(const Network& net, const ActivationCapture& captures,
                          const PruneSpec& spec, const PruneOptions& options) {
    std::map<std::string, GramMatrix> grams;
    for (const auto& [layer_id, features] : captures.features) {
        const Tensor2D feats =
            options.absorb_bias ? with_bias_row(features) : features;
        grams.emplace(layer_id,
                      accumulate_gram(GramMatrix::zero(layer_id, feats.rows()), feats));
    }
    return prune_network_from_grams(net, grams, spec, options);
}

}  // namespace snp
