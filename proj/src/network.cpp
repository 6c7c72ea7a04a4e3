#include "asdn/network.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "asdn/parallel.hpp"
#include "asdn/rng.hpp"

namespace asdn {

using json = nlohmann::json;

NetParams NetParams::uniform(int n_stages, double rho, double eta, double tau, double relax) {
    if (n_stages < 1) throw std::invalid_argument("n_stages must be >= 1");
    NetParams p;
    p.n_stages = n_stages;
    p.relax = relax;
    p.rho.assign(static_cast<std::size_t>(n_stages) + 1, rho);
    p.eta.assign(static_cast<std::size_t>(n_stages), eta);
    p.tau.assign(static_cast<std::size_t>(n_stages), tau);
    return p;
}

NetParams NetParams::defaults(int n_stages) { return uniform(n_stages, 1.0, 0.1, 1.0, 1.0); }

void NetParams::validate() const {
    if (n_stages < 1) throw std::invalid_argument("n_stages must be >= 1");
    const auto n = static_cast<std::size_t>(n_stages);
    if (rho.size() != n + 1 || eta.size() != n || tau.size() != n) {
        throw std::invalid_argument("parameter lengths must be rho: N+1, eta: N, tau: N");
    }
    if (!(relax > 0.0 && relax <= 2.0)) throw std::invalid_argument("relax must lie in (0, 2]");
    for (double r : rho) {
        if (!std::isfinite(r) || r < kRhoFloor) throw std::invalid_argument("rho entries must be finite and >= 1e-6");
    }
    for (double e : eta) {
        if (!std::isfinite(e) || e < 0.0) throw std::invalid_argument("eta entries must be finite and >= 0");
    }
    for (double t : tau) {
        if (!std::isfinite(t) || t < kTauFloor) throw std::invalid_argument("tau entries must be finite and >= 1e-6");
    }
}

void NetParams::project() {
    for (double& r : rho) r = std::max(r, kRhoFloor);
    for (double& e : eta) e = std::max(e, 0.0);
    for (double& t : tau) t = std::max(t, kTauFloor);
}

std::string params_to_json(const NetParams& params) {
    const json doc = {{"n_stages", params.n_stages}, {"relax", params.relax},
                      {"rho", params.rho},           {"eta", params.eta},
                      {"tau", params.tau}};
    return doc.dump();
}

NetParams params_from_json(const std::string& text) {
    NetParams p;
    try {
        const json doc = json::parse(text);
        p.n_stages = doc.at("n_stages").get<int>();
        p.relax = doc.at("relax").get<double>();
        p.rho = doc.at("rho").get<std::vector<double>>();
        p.eta = doc.at("eta").get<std::vector<double>>();
        p.tau = doc.at("tau").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed params JSON: ") + e.what());
    }
    p.validate();
    return p;
}

namespace {

void check_compatible(const GramCache& cache, const VectorXd& x) {
    if (x.size() != cache.dictionary().bands()) {
        throw std::invalid_argument("pixel length does not match dictionary bands");
    }
}

}  // namespace

ForwardResult forward(const GramCache& cache, const VectorXd& x, const NetParams& params) {
    params.validate();
    check_compatible(cache, x);
    const Index m = cache.dictionary().atoms_count();
    const auto n_stages = static_cast<std::size_t>(params.n_stages);
    const double relax = params.relax;
    const VectorXd dtx = cache.dtx(x);

    ForwardResult out;
    StageTrace& tr = out.trace;
    tr.alpha.reserve(n_stages + 1);
    tr.unrelaxed.reserve(n_stages + 1);
    tr.z.reserve(n_stages);
    tr.u.reserve(n_stages);
    tr.pre_activation.reserve(n_stages);

    VectorXd z = VectorXd::Zero(m);
    VectorXd u = VectorXd::Zero(m);
    auto sparsity_node = [&](std::size_t n) {
        const double rho = params.rho[n];
        const VectorXd rhs = dtx + rho * z - rho * u;
        VectorXd w = cache.factor(rho)->solve(rhs);
        tr.alpha.push_back(relax * w + (1.0 - relax) * z);
        tr.unrelaxed.push_back(std::move(w));
    };

    for (std::size_t n = 0; n < n_stages; ++n) {
        sparsity_node(n);
        const VectorXd& alpha = tr.alpha.back();
        tr.pre_activation.push_back(alpha + u);
        z = soft_threshold(tr.pre_activation.back(), params.eta[n]);
        u = u + params.tau[n] * (alpha - z);
        tr.z.push_back(z);
        tr.u.push_back(u);
    }
    sparsity_node(n_stages);

    out.code = SparseCode::from_coeffs(tr.alpha.back());
    return out;
}

VectorXd class_residuals(const Dictionary& dict, const VectorXd& coeffs, const VectorXd& x) {
    if (coeffs.size() != dict.atoms_count()) throw std::invalid_argument("code length does not match dictionary");
    VectorXd r(dict.classes());
    for (int c = 1; c <= dict.classes(); ++c) {
        const VectorXd err = x - dict.sub_dictionary(c) * coeffs.segment(dict.class_begin(c), dict.class_size(c));
        r[c - 1] = 0.5 * err.squaredNorm();
    }
    return r;
}

namespace {

/// log Σ exp(−r_j), shifted by the largest exponent.
double log_sum_exp_neg(const VectorXd& r) {
    const double shift = -r.minCoeff();
    return shift + std::log((-r.array() - shift).exp().sum());
}

void check_label(const VectorXd& residuals, int label) {
    if (label < 1 || label > residuals.size()) throw std::invalid_argument("label outside 1..C");
}

}  // namespace

double loss(const VectorXd& residuals, int label) {
    check_label(residuals, label);
    return std::max(0.0, residuals[label - 1] + log_sum_exp_neg(residuals));
}

VectorXd loss_gradient(const VectorXd& residuals, int label) {
    check_label(residuals, label);
    const double lse = log_sum_exp_neg(residuals);
    // ∂E/∂r_i = y_i − p_i with p = softmax(−r).
    VectorXd grad = -(-residuals.array() - lse).exp().matrix();
    grad[label - 1] += 1.0;
    return grad;
}

ParamGrads ParamGrads::zeros_like(const NetParams& params) {
    ParamGrads g;
    g.d_rho.assign(params.rho.size(), 0.0);
    g.d_eta.assign(params.eta.size(), 0.0);
    g.d_tau.assign(params.tau.size(), 0.0);
    return g;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& other) {
    for (std::size_t i = 0; i < d_rho.size(); ++i) d_rho[i] += other.d_rho[i];
    for (std::size_t i = 0; i < d_eta.size(); ++i) d_eta[i] += other.d_eta[i];
    for (std::size_t i = 0; i < d_tau.size(); ++i) d_tau[i] += other.d_tau[i];
    loss_value += other.loss_value;
    return *this;
}

ParamGrads& ParamGrads::operator*=(double scale) {
    for (double& v : d_rho) v *= scale;
    for (double& v : d_eta) v *= scale;
    for (double& v : d_tau) v *= scale;
    loss_value *= scale;
    return *this;
}

ParamGrads backward(const GramCache& cache, const VectorXd& x, int label, const NetParams& params,
                    const StageTrace& trace) {
    params.validate();
    check_compatible(cache, x);
    const auto n_stages = static_cast<std::size_t>(params.n_stages);
    if (trace.alpha.size() != n_stages + 1 || trace.unrelaxed.size() != n_stages + 1 ||
        trace.z.size() != n_stages || trace.u.size() != n_stages || trace.pre_activation.size() != n_stages) {
        throw TraceMismatch("trace does not match the parameter stage count");
    }

    const Dictionary& dict = cache.dictionary();
    const Index m = dict.atoms_count();
    const double relax = params.relax;
    const VectorXd zeros = VectorXd::Zero(m);
    auto z_before = [&](std::size_t n) -> const VectorXd& { return n == 0 ? zeros : trace.z[n - 1]; };
    auto u_before = [&](std::size_t n) -> const VectorXd& { return n == 0 ? zeros : trace.u[n - 1]; };

    ParamGrads grads = ParamGrads::zeros_like(params);

    // Loss seed: ∂E/∂r_i = y_i − p_i and ∂r_i/∂α_i = −D_iᵀ(x − D_i α_i).
    const VectorXd& output = trace.alpha.back();
    const VectorXd residuals = class_residuals(dict, output, x);
    grads.loss_value = loss(residuals, label);
    const VectorXd d_residuals = loss_gradient(residuals, label);
    VectorXd grad_alpha(m);
    for (int c = 1; c <= dict.classes(); ++c) {
        const auto block = dict.sub_dictionary(c);
        const VectorXd err = x - block * output.segment(dict.class_begin(c), dict.class_size(c));
        grad_alpha.segment(dict.class_begin(c), dict.class_size(c)) = -d_residuals[c - 1] * (block.transpose() * err);
    }

    // Sparsity node n: α = relax·w + (1 − relax)·z_prev, w = M⁻¹(Dᵀx + ρ z_prev − ρ u_prev),
    // M = DᵀD + ρI, so ∂w/∂ρ = M⁻¹(z_prev − u_prev − w).
    VectorXd grad_z(m), grad_u(m);
    auto sparsity_back = [&](std::size_t n, const VectorXd& g_alpha) {
        const double rho = params.rho[n];
        const VectorXd q = cache.factor(rho)->solve(g_alpha);
        grads.d_rho[n] = relax * q.dot(z_before(n) - u_before(n) - trace.unrelaxed[n]);
        grad_z = (relax * rho) * q + (1.0 - relax) * g_alpha;
        grad_u = -(relax * rho) * q;
    };

    sparsity_back(n_stages, grad_alpha);
    for (std::size_t n = n_stages; n-- > 0;) {
        const double tau = params.tau[n];
        const double eta = params.eta[n];
        const VectorXd& v = trace.pre_activation[n];

        // Multiplier node: u⁽ⁿ⁾ = u⁽ⁿ⁻¹⁾ + τ(α⁽ⁿ⁾ − z⁽ⁿ⁾).
        const VectorXd g_u = grad_u;
        grads.d_tau[n] = g_u.dot(trace.alpha[n] - trace.z[n]);

        // Nonlinear node: z⁽ⁿ⁾ = S(v, η), v = α⁽ⁿ⁾ + u⁽ⁿ⁻¹⁾.
        const VectorXd g_z = grad_z - tau * g_u;
        VectorXd g_v = VectorXd::Zero(m);
        double d_eta = 0.0;
        for (Index j = 0; j < m; ++j) {
            if (std::abs(v[j]) > eta) {
                g_v[j] = g_z[j];
                d_eta -= v[j] > 0.0 ? g_z[j] : -g_z[j];
            }
        }
        grads.d_eta[n] = d_eta;

        const VectorXd g_alpha = tau * g_u + g_v;
        sparsity_back(n, g_alpha);
        grad_u += g_u + g_v;
    }
    return grads;
}

ParamGrads pixel_gradient(const GramCache& cache, const VectorXd& x, int label, const NetParams& params) {
    const auto fwd = forward(cache, x, params);
    return backward(cache, x, label, params, fwd.trace);
}

double pixel_loss(const GramCache& cache, const VectorXd& x, int label, const NetParams& params) {
    const auto fwd = forward(cache, x, params);
    return loss(class_residuals(cache.dictionary(), fwd.code.coeffs, x), label);
}

double kink_margin(const StageTrace& trace, const NetParams& params) {
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < trace.pre_activation.size(); ++n) {
        const double eta = params.eta[n];
        for (Index j = 0; j < trace.pre_activation[n].size(); ++j) {
            margin = std::min(margin, std::abs(std::abs(trace.pre_activation[n][j]) - eta));
        }
    }
    return margin;
}

GradCheckReport grad_check(const GramCache& cache, const VectorXd& x, int label, const NetParams& params,
                           double step) {
    if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
    const auto fwd = forward(cache, x, params);
    const ParamGrads analytic = backward(cache, x, label, params, fwd.trace);

    GradCheckReport report;
    report.min_kink_margin = kink_margin(fwd.trace, params);

    auto check = [&](const std::string& group, std::vector<double> NetParams::*field,
                     const std::vector<double>& grad) {
        for (std::size_t i = 0; i < grad.size(); ++i) {
            NetParams plus = params, minus = params;
            (plus.*field)[i] += step;
            (minus.*field)[i] -= step;
            const double numeric =
                (pixel_loss(cache, x, label, plus) - pixel_loss(cache, x, label, minus)) / (2.0 * step);

            GradCheckEntry e;
            e.name = group + "[" + std::to_string(i + 1) + "]";
            e.analytic = grad[i];
            e.numeric = numeric;
            e.abs_error = std::abs(e.analytic - e.numeric);
            const double scale = std::max(std::abs(e.analytic), std::abs(e.numeric));
            e.zero_gradient = scale < kGradZeroFloor;
            e.rel_error = e.zero_gradient ? 0.0 : e.abs_error / scale;
            if (e.zero_gradient) {
                ++report.zero_gradients;
            } else {
                report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
            }
            report.max_abs_error = std::max(report.max_abs_error, e.abs_error);
            report.entries.push_back(std::move(e));
        }
    };
    check("rho", &NetParams::rho, analytic.d_rho);
    check("eta", &NetParams::eta, analytic.d_eta);
    check("tau", &NetParams::tau, analytic.d_tau);
    return report;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning_rate must be finite and >= 0");
    }
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    init.validate();
}

namespace {

void check_training_set(const GramCache& cache, const MatrixXd& pixels, std::span<const int> labels) {
    if (static_cast<Index>(labels.size()) != pixels.cols()) {
        throw std::invalid_argument("one label per training pixel required");
    }
    if (pixels.rows() != cache.dictionary().bands()) {
        throw std::invalid_argument("training pixels do not match dictionary bands");
    }
    const int classes = cache.dictionary().classes();
    for (int l : labels) {
        if (l < 1 || l > classes) throw std::invalid_argument("training label outside 1..C");
    }
}

void warm_factors(const GramCache& cache, const NetParams& params) {
    for (double rho : params.rho) cache.factor(rho);
}

ParamGrads reduce_mean(const NetParams& params, const std::vector<ParamGrads>& parts) {
    ParamGrads total = ParamGrads::zeros_like(params);
    for (const auto& g : parts) total += g;
    if (!parts.empty()) total *= 1.0 / static_cast<double>(parts.size());
    return total;
}

}  // namespace

ParamGrads batch_gradient(const GramCache& cache, const MatrixXd& pixels, std::span<const int> labels,
                          std::span<const std::size_t> batch, const NetParams& params) {
    warm_factors(cache, params);
    std::vector<ParamGrads> parts(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        const auto col = static_cast<Index>(batch[i]);
        parts[i] = pixel_gradient(cache, pixels.col(col), labels[batch[i]], params);
    });
    return reduce_mean(params, parts);
}

ParamGrads batch_gradient_serial(const GramCache& cache, const MatrixXd& pixels, std::span<const int> labels,
                                 std::span<const std::size_t> batch, const NetParams& params) {
    std::vector<ParamGrads> parts;
    parts.reserve(batch.size());
    for (std::size_t idx : batch) {
        parts.push_back(pixel_gradient(cache, pixels.col(static_cast<Index>(idx)), labels[idx], params));
    }
    return reduce_mean(params, parts);
}

double mean_loss(const GramCache& cache, const MatrixXd& pixels, std::span<const int> labels,
                 const NetParams& params) {
    warm_factors(cache, params);
    std::vector<double> losses(static_cast<std::size_t>(pixels.cols()));
    parallel_for(losses.size(), [&](std::size_t i) {
        losses[i] = pixel_loss(cache, pixels.col(static_cast<Index>(i)), labels[i], params);
    });
    if (losses.empty()) return 0.0;
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

TrainResult train(const GramCache& cache, const MatrixXd& pixels, std::span<const int> labels,
                  const TrainConfig& cfg) {
    cfg.validate();
    check_training_set(cache, pixels, labels);
    if (pixels.cols() == 0) throw std::invalid_argument("empty training set");

    TrainResult result;
    result.params = cfg.init;
    result.loss_history.push_back(mean_loss(cache, pixels, labels, result.params));
    if (!std::isfinite(result.loss_history.back())) {
        throw TrainingDiverged(0, "initial mean loss is not finite");
    }

    SplitMix64 rng(cfg.seed);
    std::vector<std::size_t> order(static_cast<std::size_t>(pixels.cols()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::span<const std::size_t> members(order.data() + start, std::min(batch, order.size() - start));
            const ParamGrads g = batch_gradient(cache, pixels, labels, members, result.params);
            NetParams& p = result.params;
            for (std::size_t i = 0; i < p.rho.size(); ++i) p.rho[i] -= cfg.learning_rate * g.d_rho[i];
            for (std::size_t i = 0; i < p.eta.size(); ++i) p.eta[i] -= cfg.learning_rate * g.d_eta[i];
            for (std::size_t i = 0; i < p.tau.size(); ++i) p.tau[i] -= cfg.learning_rate * g.d_tau[i];
            const auto finite = [](double v) { return std::isfinite(v); };
            if (!std::all_of(p.rho.begin(), p.rho.end(), finite) || !std::all_of(p.eta.begin(), p.eta.end(), finite) ||
                !std::all_of(p.tau.begin(), p.tau.end(), finite)) {
                throw TrainingDiverged(epoch, "non-finite parameter update in epoch " + std::to_string(epoch));
            }
            p.project();
        }
        const double epoch_loss = mean_loss(cache, pixels, labels, result.params);
        if (!std::isfinite(epoch_loss)) {
            throw TrainingDiverged(epoch, "mean training loss became non-finite in epoch " + std::to_string(epoch));
        }
        result.loss_history.push_back(epoch_loss);
    }
    return result;
}

}  // namespace asdn
