#include "asdn/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "asdn/rng.hpp"

namespace asdn {

SparseCode SparseCode::from_coeffs(VectorXd coeffs) {
    SparseCode code;
    code.coeffs = std::move(coeffs);
    for (Index j = 0; j < code.coeffs.size(); ++j) {
        if (code.coeffs[j] != 0.0) code.support.push_back(j);
    }
    return code;
}

VectorXd soft_threshold(const VectorXd& v, double eta) {
    VectorXd out(v.size());
    for (Index j = 0; j < v.size(); ++j) {
        const double mag = std::abs(v[j]) - eta;
        out[j] = mag > 0.0 ? std::copysign(mag, v[j]) : 0.0;
    }
    return out;
}

namespace {

void check_sparsity(const GramCache& cache, int K, const char* who) {
    const Index limit = std::min(cache.dictionary().bands(), cache.dictionary().atoms_count());
    if (K < 1 || K > limit) {
        throw std::invalid_argument(std::string(who) + ": K=" + std::to_string(K) + " outside 1.." +
                                    std::to_string(limit));
    }
}

void check_signal(const GramCache& cache, const VectorXd& x) {
    if (x.size() != cache.dictionary().bands()) {
        throw std::invalid_argument("signal length does not match dictionary bands");
    }
}

/// Indices of the k largest |values[j]| (j not excluded), ordered by
/// magnitude descending then index ascending. With `nonzero_only`, exact
/// zeros are never chosen.
std::vector<Index> top_k(const VectorXd& values, std::size_t k, const std::vector<char>* excluded = nullptr,
                         bool nonzero_only = false) {
    std::vector<Index> candidates;
    candidates.reserve(static_cast<std::size_t>(values.size()));
    for (Index j = 0; j < values.size(); ++j) {
        if (excluded && (*excluded)[static_cast<std::size_t>(j)]) continue;
        if (nonzero_only && values[j] == 0.0) continue;
        candidates.push_back(j);
    }
    k = std::min(k, candidates.size());
    auto by_magnitude = [&](Index a, Index b) {
        const double ma = std::abs(values[a]);
        const double mb = std::abs(values[b]);
        return ma != mb ? ma > mb : a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), by_magnitude);
    candidates.resize(k);
    return candidates;
}

/// Least-squares coefficients on `support`: solves G_SS c = (Dᵀx)_S.
/// Rank-deficient sub-Grams fall back to the minimum-norm solution.
VectorXd refit(const GramCache& cache, const VectorXd& dtx, const std::vector<Index>& support) {
    if (support.empty()) return VectorXd();
    const MatrixXd sub = cache.gram()(support, support);
    const VectorXd rhs = dtx(support);
    Eigen::LLT<MatrixXd> llt(sub);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
    return sub.completeOrthogonalDecomposition().solve(rhs);
}

double residual_norm(const GramCache& cache, const VectorXd& x, const std::vector<Index>& support,
                     const VectorXd& c) {
    if (support.empty()) return x.norm();
    return (x - cache.dictionary().atoms()(Eigen::all, support) * c).norm();
}

VectorXd correlations(const GramCache& cache, const VectorXd& dtx, const std::vector<Index>& support,
                      const VectorXd& c) {
    if (support.empty()) return dtx;
    return dtx - cache.gram()(Eigen::all, support) * c;
}

/// Refit coefficients at roundoff level relative to the largest one are
/// exact zeros in exact arithmetic (e.g. a selected atom that turns out
/// redundant); they are dropped so the support reflects real nonzeros.
SparseCode scatter(const GramCache& cache, const std::vector<Index>& support, const VectorXd& c) {
    VectorXd coeffs = VectorXd::Zero(cache.dictionary().atoms_count());
    const double floor = c.size() ? kGreedyTol * c.cwiseAbs().maxCoeff() : 0.0;
    for (std::size_t k = 0; k < support.size(); ++k) {
        const double v = c[static_cast<Index>(k)];
        if (std::abs(v) > floor) coeffs[support[k]] = v;
    }
    return SparseCode::from_coeffs(std::move(coeffs));
}

SparseCode zero_code(const GramCache& cache) {
    return SparseCode::from_coeffs(VectorXd::Zero(cache.dictionary().atoms_count()));
}

std::vector<Index> sorted_union(std::vector<Index> a, const std::vector<Index>& b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

/// Keeps the k entries of `support` whose coefficients in c are largest in
/// magnitude; returned ascending by atom index.
std::vector<Index> prune(const std::vector<Index>& support, const VectorXd& c, std::size_t k) {
    auto local = top_k(c, k);
    std::vector<Index> kept;
    kept.reserve(local.size());
    for (Index i : local) kept.push_back(support[static_cast<std::size_t>(i)]);
    std::sort(kept.begin(), kept.end());
    return kept;
}

std::vector<char> membership(Index size, const std::vector<Index>& support) {
    std::vector<char> in(static_cast<std::size_t>(size), 0);
    for (Index j : support) in[static_cast<std::size_t>(j)] = 1;
    return in;
}

/// Shared body of OMP (per_round = 1) and gOMP.
/// At most `budget` atoms in total: the last round is trimmed when per_round
/// does not divide it.
SparseCode matching_pursuit(const GramCache& cache, const VectorXd& x, int budget, int per_round,
                            PursuitTrace* trace) {
    const VectorXd dtx = cache.dtx(x);
    const double stop = kGreedyTol * x.norm();
    std::vector<Index> support;
    std::vector<char> selected(static_cast<std::size_t>(dtx.size()), 0);
    VectorXd c;
    double rnorm = x.norm();
    if (trace) trace->residual_norms.push_back(rnorm);

    const auto total = static_cast<std::size_t>(budget);
    while (support.size() < total && rnorm > stop) {
        const VectorXd corr = correlations(cache, dtx, support, c);
        const auto take = std::min(static_cast<std::size_t>(per_round), total - support.size());
        const auto picks = top_k(corr, take, &selected, true);
        if (picks.empty()) break;
        for (Index j : picks) {
            support.push_back(j);
            selected[static_cast<std::size_t>(j)] = 1;
            if (trace) trace->selected.push_back(j);
        }
        c = refit(cache, dtx, support);
        rnorm = residual_norm(cache, x, support, c);
        if (trace) trace->residual_norms.push_back(rnorm);
    }
    return scatter(cache, support, c);
}

}  // namespace

SparseCode omp(const GramCache& cache, const VectorXd& x, int K, PursuitTrace* trace) {
    check_sparsity(cache, K, "omp");
    check_signal(cache, x);
    return matching_pursuit(cache, x, K, 1, trace);
}

SparseCode gomp(const GramCache& cache, const VectorXd& x, int K, int S, PursuitTrace* trace) {
    check_signal(cache, x);
    if (K < 1 || S < 1) throw std::invalid_argument("gomp: K and S must be >= 1");
    if (K > cache.dictionary().atoms_count()) throw std::invalid_argument("gomp: K exceeds the number of atoms");
    return matching_pursuit(cache, x, K, S, trace);
}

SparseCode sp(const GramCache& cache, const VectorXd& x, int K, PursuitTrace* trace) {
    check_sparsity(cache, K, "sp");
    check_signal(cache, x);
    const double xnorm = x.norm();
    if (trace) trace->residual_norms.push_back(xnorm);
    if (xnorm == 0.0) return zero_code(cache);

    const VectorXd dtx = cache.dtx(x);
    const auto k = static_cast<std::size_t>(K);
    const double stop = kGreedyTol * xnorm;

    auto support = top_k(dtx, k);
    std::sort(support.begin(), support.end());
    VectorXd c = refit(cache, dtx, support);
    double rnorm = residual_norm(cache, x, support, c);
    if (trace) {
        trace->selected = support;
        trace->residual_norms.push_back(rnorm);
    }

    for (int iter = 0; iter < 100 && rnorm > stop; ++iter) {
        const auto in_support = membership(dtx.size(), support);
        const auto added = top_k(correlations(cache, dtx, support, c), k, &in_support);
        const auto expanded = sorted_union(support, added);
        const auto candidate = prune(expanded, refit(cache, dtx, expanded), k);
        const VectorXd c_new = refit(cache, dtx, candidate);
        const double r_new = residual_norm(cache, x, candidate, c_new);
        if (!(r_new < rnorm)) break;
        if (trace) {
            for (Index j : candidate) {
                if (!in_support[static_cast<std::size_t>(j)]) trace->selected.push_back(j);
            }
            trace->residual_norms.push_back(r_new);
        }
        support = candidate;
        c = c_new;
        rnorm = r_new;
    }
    return scatter(cache, support, c);
}

SparseCode romp(const GramCache& cache, const VectorXd& x, int K, PursuitTrace* trace) {
    check_sparsity(cache, K, "romp");
    check_signal(cache, x);
    const VectorXd dtx = cache.dtx(x);
    const double stop = kGreedyTol * x.norm();
    const auto cap = static_cast<std::size_t>(2 * K);

    std::vector<Index> support;
    std::vector<char> selected(static_cast<std::size_t>(dtx.size()), 0);
    VectorXd c;
    double rnorm = x.norm();
    if (trace) trace->residual_norms.push_back(rnorm);

    while (support.size() < cap && rnorm > stop) {
        const VectorXd corr = correlations(cache, dtx, support, c);
        const auto J = top_k(corr, static_cast<std::size_t>(K), &selected, true);
        if (J.empty()) break;

        // J is sorted by magnitude, so comparable groups are contiguous runs.
        std::size_t best_begin = 0, best_end = 0;
        double best_energy = -1.0;
        for (std::size_t i = 0; i < J.size(); ++i) {
            const double top = std::abs(corr[J[i]]);
            double energy = 0.0;
            std::size_t e = i;
            while (e < J.size() && 2.0 * std::abs(corr[J[e]]) >= top) {
                energy += corr[J[e]] * corr[J[e]];
                ++e;
            }
            if (energy > best_energy) {
                best_energy = energy;
                best_begin = i;
                best_end = e;
            }
        }
        best_end = std::min(best_end, best_begin + (cap - support.size()));
        for (std::size_t i = best_begin; i < best_end; ++i) {
            support.push_back(J[i]);
            selected[static_cast<std::size_t>(J[i])] = 1;
            if (trace) trace->selected.push_back(J[i]);
        }
        c = refit(cache, dtx, support);
        rnorm = residual_norm(cache, x, support, c);
        if (trace) trace->residual_norms.push_back(rnorm);
    }
    return scatter(cache, support, c);
}

SparseCode samp(const GramCache& cache, const VectorXd& x, int step, double tol, PursuitTrace* trace) {
    if (step < 1) throw std::invalid_argument("samp: step must be >= 1");
    if (tol < 0.0) throw std::invalid_argument("samp: tol must be nonnegative");
    check_signal(cache, x);

    const Index limit = std::min(cache.dictionary().bands(), cache.dictionary().atoms_count());
    const auto bound = static_cast<std::size_t>(std::max<Index>(1, limit / 2));
    const VectorXd dtx = cache.dtx(x);

    std::vector<Index> support;
    VectorXd c;
    double rnorm = x.norm();
    if (trace) trace->residual_norms.push_back(rnorm);
    auto stage_size = static_cast<std::size_t>(step);

    // Each round either shrinks the residual or grows the stage, so this
    // guard is never the binding stop in practice.
    const Index max_rounds = 100 * (cache.dictionary().atoms_count() + 1);
    for (Index round = 0; round < max_rounds && rnorm > tol && stage_size <= bound; ++round) {
        const auto in_support = membership(dtx.size(), support);
        const auto shortlist = top_k(correlations(cache, dtx, support, c), stage_size, &in_support);
        const auto candidates = sorted_union(support, shortlist);
        const auto trial = prune(candidates, refit(cache, dtx, candidates), stage_size);
        const VectorXd c_trial = refit(cache, dtx, trial);
        const double r_trial = residual_norm(cache, x, trial, c_trial);

        if (r_trial <= tol || r_trial < rnorm) {
            if (trace) {
                for (Index j : trial) {
                    if (!in_support[static_cast<std::size_t>(j)]) trace->selected.push_back(j);
                }
                trace->residual_norms.push_back(r_trial);
            }
            support = trial;
            c = c_trial;
            rnorm = r_trial;
        } else {
            stage_size += static_cast<std::size_t>(step);
        }
    }
    return scatter(cache, support, c);
}

double lasso_objective(const GramCache& cache, const VectorXd& x, const VectorXd& coeffs, double lambda) {
    return 0.5 * (x - cache.dictionary().atoms() * coeffs).squaredNorm() + lambda * coeffs.lpNorm<1>();
}

double gram_spectral_norm(const GramCache& cache) {
    const MatrixXd& gram = cache.gram();
    if (gram.rows() == 0) return 0.0;
    SplitMix64 rng(0x5eedULL);
    VectorXd v(gram.rows());
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    v.normalize();
    double estimate = 0.0;
    for (int it = 0; it < 100; ++it) {
        VectorXd w = gram * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        estimate = v.dot(w);
        v = w / norm;
    }
    return std::max(estimate, v.dot(gram * v));
}

SparseCode fista(const GramCache& cache, const VectorXd& x, const FistaConfig& cfg,
                 std::vector<double>* objective_history) {
    check_signal(cache, x);
    if (cfg.lambda < 0.0) throw std::invalid_argument("fista: lambda must be nonnegative");
    if (cfg.max_iters < 1) throw std::invalid_argument("fista: max_iters must be >= 1");

    const Index m = cache.dictionary().atoms_count();
    const double lipschitz = gram_spectral_norm(cache);
    VectorXd current = VectorXd::Zero(m);
    double f_prev = lasso_objective(cache, x, current, cfg.lambda);
    if (objective_history) objective_history->push_back(f_prev);
    if (lipschitz <= 0.0) return SparseCode::from_coeffs(std::move(current));

    const double step = 1.0 / lipschitz;
    const VectorXd dtx = cache.dtx(x);
    const MatrixXd& gram = cache.gram();
    auto prox_step = [&](const VectorXd& from) {
        return soft_threshold(from - step * (gram * from - dtx), cfg.lambda * step);
    };

    VectorXd momentum = current;
    double t = 1.0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        VectorXd next = prox_step(momentum);
        double f_next = lasso_objective(cache, x, next, cfg.lambda);
        if (f_next > f_prev) {
            // Restart from the last accepted iterate with a plain proximal step.
            t = 1.0;
            next = prox_step(current);
            f_next = lasso_objective(cache, x, next, cfg.lambda);
            if (f_next > f_prev) break;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        momentum = next + ((t - 1.0) / t_next) * (next - current);
        const bool converged = (next - current).norm() <= cfg.tol * std::max(1.0, current.norm());
        current = std::move(next);
        f_prev = f_next;
        t = t_next;
        if (objective_history) objective_history->push_back(f_prev);
        if (converged) break;
    }
    return SparseCode::from_coeffs(std::move(current));
}

void AdmmConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("admm: lambda must be >= 0");
    if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("admm: rho must be > 0");
    if (!(relax > 0.0 && relax <= 2.0)) throw std::invalid_argument("admm: relax must lie in (0, 2]");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("admm: tau must be > 0");
    if (max_iters < 1) throw std::invalid_argument("admm: max_iters must be >= 1");
    if (!(tol >= 0.0)) throw std::invalid_argument("admm: tol must be >= 0");
}

SparseCode admm_fixed(const GramCache& cache, const VectorXd& x, const AdmmConfig& cfg, AdmmTrace* trace) {
    cfg.validate();
    check_signal(cache, x);
    const Index m = cache.dictionary().atoms_count();
    const auto factor = cache.factor(cfg.rho);
    const VectorXd dtx = cache.dtx(x);
    const double eta = cfg.lambda / cfg.rho;

    VectorXd z = VectorXd::Zero(m);
    VectorXd u = VectorXd::Zero(m);
    for (int it = 0; it < cfg.max_iters; ++it) {
        const VectorXd rhs = dtx + cfg.rho * z - cfg.rho * u;
        const VectorXd alpha = cfg.relax * factor->solve(rhs) + (1.0 - cfg.relax) * z;
        VectorXd z_next = soft_threshold(alpha + u, eta);
        u = u + cfg.tau * (alpha - z_next);
        const double primal = (alpha - z_next).norm();
        const double dual = cfg.rho * (z_next - z).norm();
        z = std::move(z_next);
        if (trace) {
            trace->alpha.push_back(alpha);
            trace->z.push_back(z);
            trace->u.push_back(u);
        }
        if (std::max(primal, dual) <= cfg.tol) break;
    }
    return SparseCode::from_coeffs(std::move(z));
}

}  // namespace asdn
