#include <cmath>

#include <gtest/gtest.h>

#include "asdn/network.hpp"
#include "asdn/synthetic.hpp"

using namespace asdn;

namespace {

// Central difference of the pixel loss in one parameter slot.
double numeric_partial(const GramCache& cache, const VectorXd& x, int label, NetParams p, std::vector<double> NetParams::*field,
                       std::size_t i, double h) {
    const double base = (p.*field)[i];
    (p.*field)[i] = base + h;
    const double up = pixel_loss(cache, x, label, p);
    (p.*field)[i] = base - h;
    const double down = pixel_loss(cache, x, label, p);
    return (up - down) / (2.0 * h);
}

double brute_loss(const VectorXd& r, int label) {
    double denom = 0.0;
    for (Index j = 0; j < r.size(); ++j) denom += std::exp(-r[j]);
    return -std::log(std::exp(-r[label - 1]) / denom);
}

}  // namespace

TEST(NetParams, DefaultsAndValidation) {
    const NetParams p = NetParams::defaults(4);
    EXPECT_EQ(p.rho.size(), 5u);
    EXPECT_EQ(p.eta.size(), 4u);
    EXPECT_EQ(p.tau.size(), 4u);
    EXPECT_EQ(p.size(), 13u);
    EXPECT_NO_THROW(p.validate());

    NetParams bad = p;
    bad.eta[1] = -0.1;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = p;
    bad.rho.pop_back();
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = p;
    bad.tau[0] = std::nan("");
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = p;
    bad.relax = 0.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(NetParams, ProjectionClampsOntoFloors) {
    NetParams p = NetParams::uniform(3, -1.0, -0.5, 0.0);
    p.rho[1] = 2.0;
    p.project();
    EXPECT_EQ(p.rho[0], kRhoFloor);
    EXPECT_EQ(p.rho[1], 2.0);
    EXPECT_EQ(p.eta[2], 0.0);
    EXPECT_EQ(p.tau[0], kTauFloor);
    EXPECT_NO_THROW(p.validate());
}

TEST(NetParams, JsonRoundTrip) {
    NetParams p = NetParams::uniform(3, 0.7, 0.11, 1.3, 1.4);
    p.rho[2] = 1.0 / 3.0;
    p.eta[0] = 2e-17;
    EXPECT_EQ(params_from_json(params_to_json(p)), p);
    EXPECT_THROW((void)params_from_json("{\"n_stages\": 2}"), std::invalid_argument);
    EXPECT_THROW((void)params_from_json("not json"), std::invalid_argument);
}

TEST(Forward, FirstStageIsScaledRidgeSolve) {
    const Dictionary d = synthetic::random_dictionary(15, 25, 3, 4);
    const GramCache cache(d);
    const VectorXd x = synthetic::gaussian_matrix(15, 1, 5).col(0);
    NetParams p = NetParams::uniform(1, 0.8, 0.1, 1.0, 1.5);
    const ForwardResult f = forward(cache, x, p);
    const MatrixXd m = d.atoms().transpose() * d.atoms() + 0.8 * MatrixXd::Identity(25, 25);
    const VectorXd expected = 1.5 * m.fullPivLu().solve(d.atoms().transpose() * x);
    EXPECT_LE((f.trace.alpha[0] - expected).norm(), 1e-12 * expected.norm());
    EXPECT_EQ(f.trace.alpha.size(), 2u);
    EXPECT_EQ(f.code.coeffs, f.trace.alpha.back());
}

TEST(Forward, ZeroSignalPropagatesZeros) {
    const Dictionary d = synthetic::random_dictionary(10, 20, 2, 1);
    const GramCache cache(d);
    const ForwardResult f = forward(cache, VectorXd::Zero(10), NetParams::defaults(5));
    for (const auto* seq : {&f.trace.alpha, &f.trace.z, &f.trace.u}) {
        for (const VectorXd& v : *seq) EXPECT_TRUE(v.isZero(0.0));
    }
}

TEST(Forward, TraceSatisfiesStageEquations) {
    const auto inst = synthetic::make_gradcheck_instance(20, 40, 2, 6, 3);
    const GramCache cache(inst.dict);
    const ForwardResult f = forward(cache, inst.x, inst.params);
    const auto& t = f.trace;
    for (std::size_t n = 0; n < 6; ++n) {
        const VectorXd u_prev = n == 0 ? VectorXd::Zero(40) : t.u[n - 1];
        EXPECT_EQ(t.pre_activation[n], t.alpha[n] + u_prev);
        EXPECT_EQ(t.z[n], soft_threshold(t.pre_activation[n], inst.params.eta[n]));
        EXPECT_LE((t.u[n] - (u_prev + inst.params.tau[n] * (t.alpha[n] - t.z[n]))).norm(), 1e-15);
    }
}

TEST(Forward, StageConstantParamsReproduceAdmm) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (double relax : {1.0, 1.5}) {
            const Dictionary d = synthetic::random_dictionary(30, 60, 3, seed);
            const GramCache cache(d);
            const VectorXd x = synthetic::gaussian_matrix(30, 1, seed + 9).col(0);
            AdmmConfig cfg;
            cfg.rho = 0.9;
            cfg.lambda = 0.09;
            cfg.tau = 1.2;
            cfg.relax = relax;
            cfg.tol = 0.0;
            cfg.max_iters = 12;
            AdmmTrace reference;
            (void)admm_fixed(cache, x, cfg, &reference);
            const ForwardResult f = forward(cache, x, NetParams::uniform(12, 0.9, 0.1, 1.2, relax));
            for (std::size_t n = 0; n < 12; ++n) {
                EXPECT_LE((f.trace.alpha[n] - reference.alpha[n]).cwiseAbs().maxCoeff(), 1e-12);
                EXPECT_LE((f.trace.z[n] - reference.z[n]).cwiseAbs().maxCoeff(), 1e-12);
                EXPECT_LE((f.trace.u[n] - reference.u[n]).cwiseAbs().maxCoeff(), 1e-12);
            }
        }
    }
}

TEST(Forward, RejectsDimensionMismatch) {
    const Dictionary d = synthetic::random_dictionary(10, 20, 2, 1);
    const GramCache cache(d);
    EXPECT_THROW((void)forward(cache, VectorXd::Ones(11), NetParams::defaults(2)), std::invalid_argument);
}

TEST(Residuals, ZeroCodeGivesHalfSquaredNorm) {
    const Dictionary d = synthetic::random_dictionary(8, 12, 3, 2);
    const VectorXd x = synthetic::gaussian_matrix(8, 1, 3).col(0);
    const VectorXd r = class_residuals(d, VectorXd::Zero(12), x);
    for (Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(r[i], 0.5 * x.squaredNorm());
}

TEST(Residuals, ExactClassRepresentation) {
    const Dictionary d = synthetic::random_dictionary(20, 12, 3, 7);
    VectorXd code = VectorXd::Zero(12);
    code.segment(d.class_begin(2), d.class_size(2)) = VectorXd::LinSpaced(d.class_size(2), 1.0, 2.0);
    const VectorXd x = d.atoms() * code;
    const VectorXd r = class_residuals(d, code, x);
    EXPECT_NEAR(r[1], 0.0, 1e-28);
    EXPECT_GT(r[0], 0.0);
    EXPECT_GT(r[2], 0.0);
}

TEST(Residuals, MatchesBruteForce) {
    const Dictionary d = synthetic::random_dictionary(9, 14, 4, 11);
    const VectorXd x = synthetic::gaussian_matrix(9, 1, 12).col(0);
    const VectorXd code = synthetic::gaussian_matrix(14, 1, 13).col(0);
    const VectorXd r = class_residuals(d, code, x);
    for (int c = 1; c <= 4; ++c) {
        double s = 0.0;
        for (Index i = 0; i < 9; ++i) {
            double recon = 0.0;
            for (Index j = 0; j < 14; ++j) {
                if (d.labels_per_atom()[static_cast<std::size_t>(j)] == c) recon += d.atoms()(i, j) * code[j];
            }
            s += (x[i] - recon) * (x[i] - recon);
        }
        EXPECT_NEAR(r[c - 1], 0.5 * s, 1e-13);
    }
}

TEST(Loss, KnownValues) {
    EXPECT_NEAR(loss(VectorXd::Zero(2), 1), std::log(2.0), 1e-15);
    EXPECT_NEAR(loss((VectorXd(2) << 1.0, 3.0).finished(), 1), std::log1p(std::exp(-2.0)), 1e-15);
    EXPECT_NEAR(loss((VectorXd(2) << 1.0, 3.0).finished(), 1), 0.126928, 1e-6);
}

TEST(Loss, ShiftInvariantNonnegativeAndStable) {
    const VectorXd r = (VectorXd(4) << 0.3, 1.7, 0.05, 2.2).finished();
    for (int y = 1; y <= 4; ++y) {
        EXPECT_NEAR(loss(r, y), brute_loss(r, y), 1e-14);
        for (double c : {-5.0, 0.5, 40.0}) EXPECT_NEAR(loss((r.array() + c).matrix(), y), loss(r, y), 1e-12);
        EXPECT_GE(loss(r, y), 0.0);
    }
    // Huge residuals would underflow a naive softmax.
    const VectorXd big = (VectorXd(2) << 1000.0, 1001.0).finished();
    EXPECT_NEAR(loss(big, 1), std::log1p(std::exp(-1.0)), 1e-12);
    EXPECT_THROW((void)loss(r, 5), std::invalid_argument);
}

TEST(LossGradient, MatchesDerivativeOfLoss) {
    const VectorXd g0 = loss_gradient(VectorXd::Zero(2), 1);
    EXPECT_NEAR(g0[0], 0.5, 1e-15);
    EXPECT_NEAR(g0[1], -0.5, 1e-15);

    const VectorXd r = (VectorXd(3) << 0.4, 1.1, 0.2).finished();
    const VectorXd g = loss_gradient(r, 2);
    for (Index i = 0; i < 3; ++i) {
        VectorXd up = r, down = r;
        up[i] += 1e-6;
        down[i] -= 1e-6;
        EXPECT_NEAR(g[i], (loss(up, 2) - loss(down, 2)) / 2e-6, 1e-9);
    }
    EXPECT_NEAR(g.sum(), 0.0, 1e-15);
}

TEST(Backward, MatchesCentralDifferences) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        for (double relax : {1.0, 1.3}) {
            auto inst = synthetic::make_gradcheck_instance(20, 40, 2, 4, seed);
            inst.params.relax = relax;
            const GramCache cache(inst.dict);
            const ForwardResult f = forward(cache, inst.x, inst.params);
            if (kink_margin(f.trace, inst.params) < 1e-4) continue;
            const ParamGrads g = backward(cache, inst.x, inst.label, inst.params, f.trace);
            auto check = [&](std::vector<double> NetParams::*field, const std::vector<double>& analytic, const char* name) {
                for (std::size_t i = 0; i < analytic.size(); ++i) {
                    const double num = numeric_partial(cache, inst.x, inst.label, inst.params, field, i, 1e-6);
                    const double scale = std::max({std::abs(num), std::abs(analytic[i]), 1e-6});
                    EXPECT_LE(std::abs(num - analytic[i]) / scale, 1e-5) << name << "[" << i << "] seed " << seed;
                }
            };
            check(&NetParams::rho, g.d_rho, "rho");
            check(&NetParams::eta, g.d_eta, "eta");
            check(&NetParams::tau, g.d_tau, "tau");
            EXPECT_DOUBLE_EQ(g.loss_value, pixel_loss(cache, inst.x, inst.label, inst.params));
        }
    }
}

TEST(Backward, DeadZoneStageHasZeroEtaGradient) {
    auto inst = synthetic::make_gradcheck_instance(20, 40, 2, 4, 2);
    inst.params.eta[1] = 1e3;  // every entry of stage 2 is thresholded away
    const GramCache cache(inst.dict);
    const ParamGrads g = pixel_gradient(cache, inst.x, inst.label, inst.params);
    EXPECT_EQ(g.d_eta[1], 0.0);
}

TEST(Backward, RejectsMismatchedTrace) {
    const auto inst = synthetic::make_gradcheck_instance(20, 40, 2, 3, 1);
    const GramCache cache(inst.dict);
    const ForwardResult f = forward(cache, inst.x, inst.params);
    EXPECT_THROW((void)backward(cache, inst.x, inst.label, NetParams::defaults(4), f.trace), TraceMismatch);
}

TEST(GradCheck, PassesAtSmallStepAndDegradesAtLargeStep) {
    const auto inst = synthetic::make_gradcheck_instance(20, 40, 2, 5, 3);
    const GramCache cache(inst.dict);
    const GradCheckReport fine = grad_check(cache, inst.x, inst.label, inst.params, 1e-6);
    const GradCheckReport coarse = grad_check(cache, inst.x, inst.label, inst.params, 1e-2);
    EXPECT_EQ(fine.entries.size(), inst.params.size());
    EXPECT_LE(fine.max_rel_error, 1e-5);
    EXPECT_GT(coarse.max_abs_error, fine.max_abs_error);
    EXPECT_GE(fine.min_kink_margin, 1e-4);
}

TEST(GradCheck, ZeroSignalFlagsZeroGradients) {
    const Dictionary d = synthetic::random_dictionary(10, 20, 2, 1);
    const GramCache cache(d);
    const NetParams p = NetParams::defaults(3);
    const GradCheckReport r = grad_check(cache, VectorXd::Zero(10), 1, p, 1e-6);
    EXPECT_EQ(r.zero_gradients, p.size());
    EXPECT_EQ(r.max_rel_error, 0.0);
    for (const auto& e : r.entries) {
        EXPECT_TRUE(e.zero_gradient) << e.name;
        EXPECT_EQ(e.analytic, 0.0) << e.name;
    }
}

namespace {

struct TrainFixture {
    synthetic::SubspaceProblem problem = [] {
        synthetic::SubspaceConfig cfg;
        cfg.train_per_class = 20;
        cfg.test_per_class = 20;
        return synthetic::make_subspace_problem(cfg);
    }();
    GramCache cache{problem.dict};
};

}  // namespace

TEST(Train, ZeroLearningRateIsNoOp) {
    TrainFixture fx;
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    cfg.init = NetParams::defaults(3);
    const TrainResult r = train(fx.cache, fx.problem.train_pixels, fx.problem.train_labels, cfg);
    EXPECT_EQ(r.params, cfg.init);
    ASSERT_EQ(r.loss_history.size(), 4u);
    for (double l : r.loss_history) EXPECT_EQ(l, r.loss_history.front());
}

TEST(Train, DeterministicForSeed) {
    TrainFixture fx;
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 7;
    cfg.seed = 99;
    cfg.init = NetParams::uniform(3, 1.0, 0.5, 1.0);
    const TrainResult a = train(fx.cache, fx.problem.train_pixels, fx.problem.train_labels, cfg);
    const TrainResult b = train(fx.cache, fx.problem.train_pixels, fx.problem.train_labels, cfg);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.params, b.params);
}

TEST(Train, PoorInitImprovesAndStaysFeasible) {
    TrainFixture fx;
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.init = NetParams::uniform(3, 1.0, 0.9, 1.0);
    const TrainResult r = train(fx.cache, fx.problem.train_pixels, fx.problem.train_labels, cfg);
    EXPECT_LT(r.loss_history.back(), r.loss_history.front());
    EXPECT_NO_THROW(r.params.validate());
}

TEST(Train, LargeStepsAreProjected) {
    TrainFixture fx;
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 50.0;
    cfg.init = NetParams::uniform(2, 1e-3, 0.9, 1e-3);
    try {
        const TrainResult r = train(fx.cache, fx.problem.train_pixels, fx.problem.train_labels, cfg);
        for (double v : r.params.rho) EXPECT_GE(v, kRhoFloor);
        for (double v : r.params.eta) EXPECT_GE(v, 0.0);
        for (double v : r.params.tau) EXPECT_GE(v, kTauFloor);
    } catch (const TrainingDiverged& e) {
        EXPECT_GE(e.epoch(), 1);
    }
}

TEST(Train, RejectsBadConfigAndLabels) {
    TrainFixture fx;
    TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW((void)train(fx.cache, fx.problem.train_pixels, fx.problem.train_labels, cfg), std::invalid_argument);
    cfg.epochs = 1;
    std::vector<int> labels = fx.problem.train_labels;
    labels[0] = 7;
    EXPECT_THROW((void)train(fx.cache, fx.problem.train_pixels, labels, cfg), std::invalid_argument);
}

TEST(BatchGradient, ParallelMatchesSerialExactly) {
    TrainFixture fx;
    const NetParams p = NetParams::uniform(4, 0.8, 0.2, 1.1);
    std::vector<std::size_t> batch(fx.problem.train_labels.size());
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = (i * 7) % batch.size();
    const ParamGrads a = batch_gradient(fx.cache, fx.problem.train_pixels, fx.problem.train_labels, batch, p);
    const ParamGrads b = batch_gradient_serial(fx.cache, fx.problem.train_pixels, fx.problem.train_labels, batch, p);
    EXPECT_EQ(a.d_rho, b.d_rho);
    EXPECT_EQ(a.d_eta, b.d_eta);
    EXPECT_EQ(a.d_tau, b.d_tau);
    EXPECT_EQ(a.loss_value, b.loss_value);
}
