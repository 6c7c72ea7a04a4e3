#pragma once

#include <vector>

#include "asdn/dictionary.hpp"

namespace asdn {

/// Coefficient vector over the dictionary atoms plus its nonzero pattern.
struct SparseCode {
    VectorXd coeffs;
    std::vector<Index> support;  // ascending

    static SparseCode from_coeffs(VectorXd coeffs);
};

/// Entrywise sign(v) * max(|v| - eta, 0).
VectorXd soft_threshold(const VectorXd& v, double eta);

inline constexpr double kGreedyTol = 1e-10;

/// Selection history of a greedy solver: atoms in the order they were added
/// and the residual norm after each refit (entry 0 is ‖x‖).
struct PursuitTrace {
    std::vector<Index> selected;
    std::vector<double> residual_norms;
};

// Greedy pursuit family. Correlation ties go to the lowest atom index.
// Refits solve the normal equations on the selected sub-Gram.

/// Orthogonal matching pursuit, at most K atoms. Stops early when the
/// residual drops to kGreedyTol * ‖x‖.
SparseCode omp(const GramCache& cache, const VectorXd& x, int K, PursuitTrace* trace = nullptr);

/// Subspace pursuit: keeps exactly K atoms, expand-by-K then prune-to-K,
/// until the residual stops decreasing (at most 100 rounds).
SparseCode sp(const GramCache& cache, const VectorXd& x, int K, PursuitTrace* trace = nullptr);

/// Regularized OMP: adds the maximal-energy group of comparable
/// correlations (ratio <= 2) among the K largest each round. The support is
/// capped at 2K atoms.
SparseCode romp(const GramCache& cache, const VectorXd& x, int K, PursuitTrace* trace = nullptr);

/// Generalized OMP: S atoms per round for ceil(K / S) rounds, the last round
/// trimmed so the support never exceeds K.
SparseCode gomp(const GramCache& cache, const VectorXd& x, int K, int S, PursuitTrace* trace = nullptr);

/// Sparsity-adaptive matching pursuit. Stage size grows by `step` whenever
/// the residual stalls; stops at ‖r‖ <= tol (absolute) or once the stage
/// size would exceed min(L, M) / 2.
SparseCode samp(const GramCache& cache, const VectorXd& x, int step, double tol,
                PursuitTrace* trace = nullptr);

/// ½‖x − Dα‖² + λ‖α‖₁.
double lasso_objective(const GramCache& cache, const VectorXd& x, const VectorXd& coeffs, double lambda);

/// Largest eigenvalue of DᵀD by 100 power iterations (Rayleigh quotient).
double gram_spectral_norm(const GramCache& cache);

struct FistaConfig {
    double lambda = 0.0;
    int max_iters = 1000;
    double tol = 1e-8;
};

/// FISTA with function-value restart; the objective never increases.
/// Stops when ‖α_t − α_{t−1}‖ <= tol * max(1, ‖α_{t−1}‖).
SparseCode fista(const GramCache& cache, const VectorXd& x, const FistaConfig& cfg,
                 std::vector<double>* objective_history = nullptr);

struct AdmmConfig {
    double lambda = 0.0;
    double rho = 1.0;
    double relax = 1.0;
    double tau = 1.0;
    int max_iters = 1000;
    double tol = 1e-8;

    void validate() const;
};

/// Per-iteration (α, z, u) of admm_fixed.
struct AdmmTrace {
    std::vector<VectorXd> alpha;
    std::vector<VectorXd> z;
    std::vector<VectorXd> u;
};

/// Fixed-parameter ADMM on the lasso in scaled form, starting from z = u = 0:
///   α ← relax (DᵀD + ρI)⁻¹(Dᵀx + ρz − ρu) + (1 − relax) z
///   z ← S(α + u, λ/ρ)
///   u ← u + τ(α − z)
/// Stops after max_iters or when max(‖α − z‖, ρ‖z − z_prev‖) <= tol.
/// Returns z, which is exactly sparse.
SparseCode admm_fixed(const GramCache& cache, const VectorXd& x, const AdmmConfig& cfg,
                      AdmmTrace* trace = nullptr);

}  // namespace asdn
