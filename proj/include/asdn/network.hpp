#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asdn/dictionary.hpp"
#include "asdn/solvers.hpp"

namespace asdn {

inline constexpr double kRhoFloor = 1e-6;
inline constexpr double kTauFloor = 1e-6;

/// Learnable per-stage parameters of the unrolled ADMM network.
///
/// Stage n (1..N) uses rho[n-1], eta[n-1] and tau[n-1]; the trailing
/// output node uses rho[N]. `relax` is fixed, not learned.
struct NetParams {
    int n_stages = 0;
    double relax = 1.0;
    std::vector<double> rho;  // N + 1
    std::vector<double> eta;  // N
    std::vector<double> tau;  // N

    /// Same value at every stage.
    static NetParams uniform(int n_stages, double rho, double eta, double tau, double relax = 1.0);
    /// rho = 1, eta = 0.1, tau = 1, relax = 1.
    static NetParams defaults(int n_stages = 9);

    void validate() const;
    /// Clamps onto rho >= kRhoFloor, eta >= 0, tau >= kTauFloor.
    void project();

    std::size_t size() const { return rho.size() + eta.size() + tau.size(); }

    bool operator==(const NetParams&) const = default;
};

/// JSON: {"n_stages":N,"relax":r,"rho":[...],"eta":[...],"tau":[...]}.
/// Doubles use shortest round-trip formatting, so parse(dump(p)) == p.
std::string params_to_json(const NetParams& params);
NetParams params_from_json(const std::string& text);

/// Cached intermediates of one forward pass. alpha holds N + 1 entries
/// (the last is the network output); the rest hold N. pre_activation[n] is
/// the soft-threshold input α⁽ⁿ⁾ + u⁽ⁿ⁻¹⁾, and unrelaxed[n] is the raw
/// (DᵀD + ρI)⁻¹(...) solve feeding α⁽ⁿ⁾.
struct StageTrace {
    std::vector<VectorXd> alpha;
    std::vector<VectorXd> z;
    std::vector<VectorXd> u;
    std::vector<VectorXd> pre_activation;
    std::vector<VectorXd> unrelaxed;
};

struct ForwardResult {
    SparseCode code;
    StageTrace trace;
};

/// Runs the N stages (sparsity, nonlinear, multiplier) from z = u = 0, then
/// the output sparsity node on (z⁽ᴺ⁾, u⁽ᴺ⁾).
ForwardResult forward(const GramCache& cache, const VectorXd& x, const NetParams& params);

/// r_i = ½‖x − D_i α_i‖² for every class.
VectorXd class_residuals(const Dictionary& dict, const VectorXd& coeffs, const VectorXd& x);

/// Cross-entropy of softmax(−r) against class `label` (1-based).
double loss(const VectorXd& residuals, int label);

/// ∂E/∂r = onehot(label) − softmax(−r).
VectorXd loss_gradient(const VectorXd& residuals, int label);

class TraceMismatch : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParamGrads {
    std::vector<double> d_rho;
    std::vector<double> d_eta;
    std::vector<double> d_tau;
    double loss_value = 0.0;

    static ParamGrads zeros_like(const NetParams& params);
    ParamGrads& operator+=(const ParamGrads& other);
    ParamGrads& operator*=(double scale);
};

/// Exact gradients of the loss with respect to every rho, eta and tau,
/// by reverse traversal of the stage graph using the cached trace.
ParamGrads backward(const GramCache& cache, const VectorXd& x, int label, const NetParams& params,
                    const StageTrace& trace);

/// Forward + loss + backward for one pixel.
ParamGrads pixel_gradient(const GramCache& cache, const VectorXd& x, int label, const NetParams& params);

/// Loss of the network output for one pixel.
double pixel_loss(const GramCache& cache, const VectorXd& x, int label, const NetParams& params);

struct GradCheckEntry {
    std::string name;  // e.g. "rho[3]"
    double analytic = 0.0;
    double numeric = 0.0;
    double abs_error = 0.0;
    double rel_error = 0.0;
    bool zero_gradient = false;
};

/// Comparison of backward() against central differences. Entries whose
/// analytic and numeric values are both below `zero_floor` in magnitude are
/// flagged zero_gradient and excluded from max_rel_error.
struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t zero_gradients = 0;
    double min_kink_margin = 0.0;
};

inline constexpr double kGradZeroFloor = 1e-10;

GradCheckReport grad_check(const GramCache& cache, const VectorXd& x, int label, const NetParams& params,
                           double step);

/// Smallest | |v⁽ⁿ⁾_j| − η⁽ⁿ⁾ | over the trace: distance to the nearest
/// soft-threshold kink.
double kink_margin(const StageTrace& trace, const NetParams& params);

struct TrainConfig {
    double learning_rate = 1e-2;
    int epochs = 50;
    int batch_size = 32;
    std::uint64_t seed = 1;
    NetParams init = NetParams::defaults();

    void validate() const;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int epoch, const std::string& what) : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

struct TrainResult {
    NetParams params;
    /// Mean training loss before training (entry 0) and after each epoch.
    std::vector<double> loss_history;
};

/// Mean of per-pixel gradients over the columns `batch` of `pixels`.
/// Pixels are evaluated in parallel; the sum is reduced in column order, so
/// the result does not depend on the thread count.
ParamGrads batch_gradient(const GramCache& cache, const MatrixXd& pixels, std::span<const int> labels,
                          std::span<const std::size_t> batch, const NetParams& params);

/// Single-threaded reference for batch_gradient.
ParamGrads batch_gradient_serial(const GramCache& cache, const MatrixXd& pixels, std::span<const int> labels,
                                 std::span<const std::size_t> batch, const NetParams& params);

/// Mean loss over all columns of `pixels`.
double mean_loss(const GramCache& cache, const MatrixXd& pixels, std::span<const int> labels,
                 const NetParams& params);

/// Seeded minibatch projected gradient descent on rho, eta and tau.
TrainResult train(const GramCache& cache, const MatrixXd& pixels, std::span<const int> labels,
                  const TrainConfig& cfg);

}  // namespace asdn
