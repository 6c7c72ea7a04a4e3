#include "asdn/classify.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "asdn/parallel.hpp"

namespace asdn {

using json = nlohmann::json;

VectorXd class_residual_norms(const Dictionary& dict, const VectorXd& coeffs, const VectorXd& x) {
    if (coeffs.size() != dict.atoms_count()) throw std::invalid_argument("code length does not match dictionary");
    VectorXd r(dict.classes());
    for (int c = 1; c <= dict.classes(); ++c) {
        r[c - 1] = (x - dict.sub_dictionary(c) * coeffs.segment(dict.class_begin(c), dict.class_size(c))).norm();
    }
    return r;
}

int src_decide(const Dictionary& dict, const SparseCode& code, const VectorXd& x) {
    const VectorXd r = class_residual_norms(dict, code.coeffs, x);
    Index best = 0;
    for (Index c = 1; c < r.size(); ++c) {
        if (r[c] < r[best]) best = c;
    }
    return static_cast<int>(best) + 1;
}

ClassificationReport evaluate(std::span<const int> pred, std::span<const int> truth, int classes) {
    if (pred.size() != truth.size()) throw std::invalid_argument("evaluate: prediction and truth lengths differ");
    if (pred.empty()) throw std::invalid_argument("evaluate: empty input");
    if (classes < 1) throw std::invalid_argument("evaluate: classes must be >= 1");

    const auto C = static_cast<std::size_t>(classes);
    ClassificationReport rep;
    rep.confusion.assign(C, std::vector<std::int64_t>(C, 0));
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (truth[k] < 1 || truth[k] > classes || pred[k] < 1 || pred[k] > classes) {
            throw std::invalid_argument("evaluate: label outside 1.." + std::to_string(classes));
        }
        ++rep.confusion[static_cast<std::size_t>(truth[k] - 1)][static_cast<std::size_t>(pred[k] - 1)];
    }

    const auto total = static_cast<double>(pred.size());
    std::vector<double> row(C, 0.0), col(C, 0.0);
    double agree = 0.0;
    for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t j = 0; j < C; ++j) {
            row[i] += static_cast<double>(rep.confusion[i][j]);
            col[j] += static_cast<double>(rep.confusion[i][j]);
        }
        agree += static_cast<double>(rep.confusion[i][i]);
    }

    rep.per_class_acc.resize(C);
    for (std::size_t i = 0; i < C; ++i) {
        if (row[i] == 0.0) {
            rep.per_class_acc[i] = 0.0;
            rep.absent_classes.push_back(static_cast<int>(i) + 1);
        } else {
            rep.per_class_acc[i] = static_cast<double>(rep.confusion[i][i]) / row[i];
        }
    }
    rep.oa = agree / total;
    rep.aa = std::accumulate(rep.per_class_acc.begin(), rep.per_class_acc.end(), 0.0) / static_cast<double>(C);

    double chance = 0.0;
    for (std::size_t i = 0; i < C; ++i) chance += row[i] * col[i];
    chance /= total * total;
    // chance == 1 only when truth and prediction are one and the same class.
    rep.kappa = chance < 1.0 ? (rep.oa - chance) / (1.0 - chance) : 1.0;
    return rep;
}

namespace {

json report_json(const ClassificationReport& r) {
    std::int64_t total = 0;
    for (const auto& row : r.confusion) total = std::accumulate(row.begin(), row.end(), total);
    return {{"classes", r.confusion.size()}, {"total", total},          {"oa", r.oa},
            {"aa", r.aa},                    {"kappa", r.kappa},        {"per_class_acc", r.per_class_acc},
            {"confusion", r.confusion},      {"absent_classes", r.absent_classes}};
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <typename... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

int as_count(const std::string& param, double value) {
    if (value != std::floor(value) || value < 0 || value > 1e9) {
        throw std::invalid_argument("parameter " + param + " must be a nonnegative integer");
    }
    return static_cast<int>(value);
}

[[noreturn]] void no_such_param(const SolverSpec& spec, const std::string& param) {
    throw std::invalid_argument("solver " + solver_name(spec) + " has no parameter '" + param + "'");
}

void warm_factors(const GramCache& cache, const SolverSpec& spec) {
    if (const auto* a = std::get_if<AdmmSpec>(&spec)) {
        a->cfg.validate();
        cache.factor(a->cfg.rho);
    } else if (const auto* n = std::get_if<NetworkSpec>(&spec)) {
        n->params.validate();
        for (double rho : n->params.rho) cache.factor(rho);
    }
}

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string report_to_json(const ClassificationReport& report) { return report_json(report).dump(2); }

std::string solver_name(const SolverSpec& spec) {
    return std::visit(overloaded{[](const OmpSpec&) { return "omp"; }, [](const SpSpec&) { return "sp"; },
                                 [](const RompSpec&) { return "romp"; }, [](const GompSpec&) { return "gomp"; },
                                 [](const SampSpec&) { return "samp"; }, [](const FistaSpec&) { return "fista"; },
                                 [](const AdmmSpec&) { return "admm_fixed"; },
                                 [](const NetworkSpec&) { return "asdn"; }},
                      spec);
}

SolverSpec solver_from_name(const std::string& name) {
    if (name == "omp") return OmpSpec{};
    if (name == "sp") return SpSpec{};
    if (name == "romp") return RompSpec{};
    if (name == "gomp") return GompSpec{};
    if (name == "samp") return SampSpec{};
    if (name == "fista") return FistaSpec{};
    if (name == "admm_fixed" || name == "admm") return AdmmSpec{};
    if (name == "asdn") return NetworkSpec{};
    throw UnknownSolver("unknown solver '" + name + "'");
}

void set_solver_param(SolverSpec& spec, const std::string& param, double value) {
    std::visit(
        overloaded{
            [&](OmpSpec& s) { param == "K" ? void(s.K = as_count(param, value)) : no_such_param(spec, param); },
            [&](SpSpec& s) { param == "K" ? void(s.K = as_count(param, value)) : no_such_param(spec, param); },
            [&](RompSpec& s) { param == "K" ? void(s.K = as_count(param, value)) : no_such_param(spec, param); },
            [&](GompSpec& s) {
                if (param == "K") s.K = as_count(param, value);
                else if (param == "S") s.S = as_count(param, value);
                else no_such_param(spec, param);
            },
            [&](SampSpec& s) {
                if (param == "step") s.step = as_count(param, value);
                else if (param == "tol") s.tol = value;
                else no_such_param(spec, param);
            },
            [&](FistaSpec& s) {
                if (param == "lambda") s.cfg.lambda = value;
                else if (param == "max_iters") s.cfg.max_iters = as_count(param, value);
                else if (param == "tol") s.cfg.tol = value;
                else no_such_param(spec, param);
            },
            [&](AdmmSpec& s) {
                if (param == "lambda") s.cfg.lambda = value;
                else if (param == "rho") s.cfg.rho = value;
                else if (param == "relax") s.cfg.relax = value;
                else if (param == "tau") s.cfg.tau = value;
                else if (param == "max_iters") s.cfg.max_iters = as_count(param, value);
                else if (param == "tol") s.cfg.tol = value;
                else no_such_param(spec, param);
            },
            [&](NetworkSpec& s) {
                NetParams& p = s.params;
                if (param == "stages") {
                    p = NetParams::uniform(as_count(param, value), p.rho.front(), p.eta.front(), p.tau.front(), p.relax);
                } else if (param == "rho") {
                    p.rho.assign(p.rho.size(), value);
                } else if (param == "eta") {
                    p.eta.assign(p.eta.size(), value);
                } else if (param == "tau") {
                    p.tau.assign(p.tau.size(), value);
                } else if (param == "relax") {
                    p.relax = value;
                } else {
                    no_such_param(spec, param);
                }
            },
        },
        spec);
}

SparseCode run_solver(const GramCache& cache, const VectorXd& x, const SolverSpec& spec) {
    return std::visit(overloaded{[&](const OmpSpec& s) { return omp(cache, x, s.K); },
                                 [&](const SpSpec& s) { return sp(cache, x, s.K); },
                                 [&](const RompSpec& s) { return romp(cache, x, s.K); },
                                 [&](const GompSpec& s) { return gomp(cache, x, s.K, s.S); },
                                 [&](const SampSpec& s) { return samp(cache, x, s.step, s.tol); },
                                 [&](const FistaSpec& s) { return fista(cache, x, s.cfg); },
                                 [&](const AdmmSpec& s) { return admm_fixed(cache, x, s.cfg); },
                                 [&](const NetworkSpec& s) { return forward(cache, x, s.params).code; }},
                      spec);
}

std::vector<int> classify_testset(const GramCache& cache, const MatrixXd& pixels, const SolverSpec& spec) {
    if (pixels.cols() == 0) throw std::invalid_argument("classify_testset: empty test set");
    warm_factors(cache, spec);
    std::vector<int> pred(static_cast<std::size_t>(pixels.cols()));
    parallel_for(pred.size(), [&](std::size_t i) {
        const VectorXd x = pixels.col(static_cast<Index>(i));
        pred[i] = src_decide(cache.dictionary(), run_solver(cache, x, spec), x);
    });
    return pred;
}

std::vector<int> classify_testset_serial(const GramCache& cache, const MatrixXd& pixels, const SolverSpec& spec) {
    if (pixels.cols() == 0) throw std::invalid_argument("classify_testset: empty test set");
    std::vector<int> pred;
    pred.reserve(static_cast<std::size_t>(pixels.cols()));
    for (Index i = 0; i < pixels.cols(); ++i) {
        const VectorXd x = pixels.col(i);
        pred.push_back(src_decide(cache.dictionary(), run_solver(cache, x, spec), x));
    }
    return pred;
}

Split SplitPlan::draw(const LabeledCube& cube, std::uint64_t seed) const {
    if (!dict_counts.empty()) return make_split_counts(cube, dict_counts, train_counts, seed);
    return make_split(cube, dict_frac, train_frac, seed);
}

RunOutcome run_experiment(const LabeledCube& cube, const Split& split, bool normalize, const SolverSpec& solver,
                          const std::optional<TrainConfig>& training) {
    const PixelBatch atoms = extract_pixels(cube, split.all_dictionary(), normalize);
    const Dictionary dict = assemble(atoms.spectra, atoms.labels, split.classes());
    const GramCache cache(dict);

    RunOutcome out;
    SolverSpec effective = solver;
    if (auto* net = std::get_if<NetworkSpec>(&effective); net && training) {
        const PixelBatch train_set = extract_pixels(cube, split.all_train(), normalize);
        TrainConfig cfg = *training;
        cfg.init = net->params;
        out.training = train(cache, train_set.spectra, train_set.labels, cfg);
        net->params = out.training->params;
    }

    out.test_ids = split.all_test();
    const PixelBatch test = extract_pixels(cube, out.test_ids, normalize);
    out.predictions = classify_testset(cache, test.spectra, effective);
    out.report = evaluate(out.predictions, test.labels, split.classes());
    return out;
}

SweepResult sweep(const LabeledCube& cube, const SplitPlan& plan, const SweepSpec& spec) {
    if (spec.grid.empty()) throw std::invalid_argument("sweep: empty grid");
    if (spec.runs < 1) throw std::invalid_argument("sweep: runs must be >= 1");

    SweepResult result;
    result.parameter = spec.parameter;
    result.grid = spec.grid;
    for (int r = 0; r < spec.runs; ++r) result.seeds.push_back(spec.base_seed + static_cast<std::uint64_t>(r));

    for (double value : spec.grid) {
        SweepPoint point;
        point.value = value;
        std::vector<double> oa, aa, kappa;
        try {
            SolverSpec solver = spec.solver;
            set_solver_param(solver, spec.parameter, value);
            for (std::uint64_t seed : result.seeds) {
                const Split split = plan.draw(cube, seed);
                auto outcome = run_experiment(cube, split, plan.normalize, solver, spec.training);
                oa.push_back(outcome.report.oa);
                aa.push_back(outcome.report.aa);
                kappa.push_back(outcome.report.kappa);
                point.runs.push_back(std::move(outcome.report));
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("sweep " + spec.parameter + "=" + format_double(value) + ": " + e.what());
        }
        point.oa_mean = mean(oa);
        point.oa_std = sample_std(oa);
        point.aa_mean = mean(aa);
        point.aa_std = sample_std(aa);
        point.kappa_mean = mean(kappa);
        point.kappa_std = sample_std(kappa);
        result.points.push_back(std::move(point));
    }
    return result;
}

std::string sweep_to_csv(const SweepResult& result) {
    std::ostringstream out;
    out << "value,oa_mean,oa_std,aa_mean,aa_std,kappa_mean,kappa_std\n";
    for (const auto& p : result.points) {
        out << format_double(p.value) << ',' << format_double(100.0 * p.oa_mean) << ','
            << format_double(100.0 * p.oa_std) << ',' << format_double(100.0 * p.aa_mean) << ','
            << format_double(100.0 * p.aa_std) << ',' << format_double(100.0 * p.kappa_mean) << ','
            << format_double(100.0 * p.kappa_std) << '\n';
    }
    return out.str();
}

std::string sweep_to_json(const SweepResult& result) {
    json points = json::array();
    for (const auto& p : result.points) {
        json runs = json::array();
        for (const auto& r : p.runs) runs.push_back(report_json(r));
        points.push_back({{"value", p.value},
                          {"oa_mean", p.oa_mean},
                          {"oa_std", p.oa_std},
                          {"aa_mean", p.aa_mean},
                          {"aa_std", p.aa_std},
                          {"kappa_mean", p.kappa_mean},
                          {"kappa_std", p.kappa_std},
                          {"runs", runs}});
    }
    const json doc = {{"parameter", result.parameter}, {"grid", result.grid}, {"seeds", result.seeds},
                      {"points", points}};
    return doc.dump(2);
}

}  // namespace asdn
