#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "asdn/dataset.hpp"
#include "asdn/dictionary.hpp"
#include "asdn/network.hpp"
#include "asdn/solvers.hpp"

namespace asdn {

/// ‖x − D_i α_i‖₂ for each class.
VectorXd class_residual_norms(const Dictionary& dict, const VectorXd& coeffs, const VectorXd& x);

/// SRC rule: the class (1-based) with the smallest reconstruction residual,
/// lowest class on ties.
int src_decide(const Dictionary& dict, const SparseCode& code, const VectorXd& x);

/// Confusion matrix (rows = truth, columns = predicted) and its summary
/// accuracies. Fractions, not percentages.
struct ClassificationReport {
    std::vector<std::vector<std::int64_t>> confusion;
    std::vector<double> per_class_acc;
    double oa = 0.0;
    double aa = 0.0;
    double kappa = 0.0;
    /// Classes with no test pixels; they count as accuracy 0 in AA.
    std::vector<int> absent_classes;

    bool operator==(const ClassificationReport&) const = default;
};

ClassificationReport evaluate(std::span<const int> pred, std::span<const int> truth, int classes);

std::string report_to_json(const ClassificationReport& report);

// Solver selectors. Parameters mirror each solver's signature.
struct OmpSpec { int K = 9; };
struct SpSpec { int K = 9; };
struct RompSpec { int K = 9; };
struct GompSpec { int K = 9; int S = 2; };
struct SampSpec { int step = 1; double tol = kGreedyTol; };
struct FistaSpec { FistaConfig cfg; };
struct AdmmSpec { AdmmConfig cfg; };
struct NetworkSpec { NetParams params = NetParams::defaults(); };

using SolverSpec = std::variant<OmpSpec, SpSpec, RompSpec, GompSpec, SampSpec, FistaSpec, AdmmSpec, NetworkSpec>;

class UnknownSolver : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// One of omp, sp, romp, gomp, samp, fista, admm_fixed, asdn.
std::string solver_name(const SolverSpec& spec);
SolverSpec solver_from_name(const std::string& name);

/// Sets a named numeric parameter (K, S, step, tol, lambda, rho, relax, tau,
/// max_iters, stages). Throws std::invalid_argument if the solver has no
/// such parameter.
void set_solver_param(SolverSpec& spec, const std::string& param, double value);

SparseCode run_solver(const GramCache& cache, const VectorXd& x, const SolverSpec& spec);

/// Codes every column of `pixels` and applies src_decide. OpenMP-parallel
/// across pixels; output order matches column order.
std::vector<int> classify_testset(const GramCache& cache, const MatrixXd& pixels, const SolverSpec& spec);

/// Single-threaded reference for classify_testset.
std::vector<int> classify_testset_serial(const GramCache& cache, const MatrixXd& pixels, const SolverSpec& spec);

struct SweepPoint {
    double value = 0.0;
    double oa_mean = 0.0, oa_std = 0.0;
    double aa_mean = 0.0, aa_std = 0.0;
    double kappa_mean = 0.0, kappa_std = 0.0;
    std::vector<ClassificationReport> runs;
};

struct SweepResult {
    std::string parameter;
    std::vector<double> grid;
    std::vector<SweepPoint> points;
    std::vector<std::uint64_t> seeds;
};

/// How each sweep run draws its split.
struct SplitPlan {
    double dict_frac = 0.01;
    double train_frac = 0.1;
    std::vector<std::size_t> dict_counts;   // optional per-class override
    std::vector<std::size_t> train_counts;  // used together with dict_counts
    bool normalize = true;

    Split draw(const LabeledCube& cube, std::uint64_t seed) const;
};

struct SweepSpec {
    SolverSpec solver;
    std::string parameter;
    std::vector<double> grid;
    int runs = 5;
    std::uint64_t base_seed = 1;
    /// When the solver is the network, each run trains on its train split
    /// with this config (its init comes from the swept NetworkSpec).
    std::optional<TrainConfig> training;
};

/// Everything one classification run produces.
struct RunOutcome {
    ClassificationReport report;
    std::vector<int> predictions;      // aligned with split.all_test()
    std::vector<std::size_t> test_ids;
    std::optional<TrainResult> training;
};

/// Draws nothing: builds the dictionary from `split`, optionally trains the
/// network, classifies the test pixels and evaluates.
RunOutcome run_experiment(const LabeledCube& cube, const Split& split, bool normalize, const SolverSpec& solver,
                          const std::optional<TrainConfig>& training);

/// For each grid value and run r in [0, runs), draws a split with seed
/// base_seed + r, classifies, and aggregates mean and sample stddev.
SweepResult sweep(const LabeledCube& cube, const SplitPlan& plan, const SweepSpec& spec);

/// value,oa_mean,oa_std,aa_mean,aa_std,kappa_mean,kappa_std with accuracies
/// scaled to percent.
std::string sweep_to_csv(const SweepResult& result);
std::string sweep_to_json(const SweepResult& result);

}  // namespace asdn
