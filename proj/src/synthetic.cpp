#include "asdn/synthetic.hpp"

#include <stdexcept>

#include "asdn/rng.hpp"

namespace asdn::synthetic {

MatrixXd gaussian_matrix(Index bands, Index cols, std::uint64_t seed) {
    SplitMix64 rng(seed);
    MatrixXd m(bands, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < bands; ++i) m(i, j) = rng.normal();
    }
    return m;
}

MatrixXd unit_columns(Index bands, Index cols, std::uint64_t seed) {
    MatrixXd m = gaussian_matrix(bands, cols, seed);
    m.colwise().normalize();
    return m;
}

Dictionary random_dictionary(Index bands, Index atoms, int classes, std::uint64_t seed) {
    if (classes < 1 || atoms < classes) throw std::invalid_argument("need at least one atom per class");
    std::vector<int> labels(static_cast<std::size_t>(atoms));
    for (Index j = 0; j < atoms; ++j) labels[static_cast<std::size_t>(j)] = static_cast<int>(j * classes / atoms) + 1;
    return assemble(unit_columns(bands, atoms, seed), labels, classes);
}

MatrixXd random_orthonormal(Index bands, std::uint64_t seed) {
    const MatrixXd g = gaussian_matrix(bands, bands, seed);
    Eigen::HouseholderQR<MatrixXd> qr(g);
    return qr.householderQ() * MatrixXd::Identity(bands, bands);
}

namespace {

VectorXd draw_sample(const MatrixXd& basis, double noise, SplitMix64& rng) {
    VectorXd coef(basis.cols());
    for (Index k = 0; k < coef.size(); ++k) coef[k] = rng.normal();
    VectorXd x = basis * coef;
    x.normalize();
    for (Index i = 0; i < x.size(); ++i) x[i] += noise * rng.normal();
    x.normalize();
    return x;
}

std::vector<MatrixXd> class_bases(const SubspaceConfig& cfg) {
    if (cfg.classes < 1 || cfg.subspace_dim < 1 || cfg.subspace_dim > cfg.bands) {
        throw std::invalid_argument("invalid subspace configuration");
    }
    std::vector<MatrixXd> bases;
    for (int c = 0; c < cfg.classes; ++c) {
        const MatrixXd g = gaussian_matrix(cfg.bands, cfg.subspace_dim, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(c));
        Eigen::HouseholderQR<MatrixXd> qr(g);
        bases.push_back(qr.householderQ() * MatrixXd::Identity(cfg.bands, cfg.subspace_dim));
    }
    return bases;
}

}  // namespace

SubspaceProblem make_subspace_problem(const SubspaceConfig& cfg) {
    SubspaceProblem p;
    p.bases = class_bases(cfg);
    SplitMix64 rng(cfg.seed ^ 0xA5A5A5A5DEADBEEFULL);

    auto draw_block = [&](Index per_class, MatrixXd& out, std::vector<int>& labels) {
        out.resize(cfg.bands, per_class * cfg.classes);
        labels.clear();
        Index col = 0;
        for (int c = 0; c < cfg.classes; ++c) {
            for (Index k = 0; k < per_class; ++k) {
                out.col(col++) = draw_sample(p.bases[static_cast<std::size_t>(c)], cfg.noise, rng);
                labels.push_back(c + 1);
            }
        }
    };

    MatrixXd atoms;
    std::vector<int> atom_labels;
    draw_block(cfg.atoms_per_class, atoms, atom_labels);
    p.dict = assemble(atoms, atom_labels, cfg.classes);
    draw_block(cfg.train_per_class, p.train_pixels, p.train_labels);
    draw_block(cfg.test_per_class, p.test_pixels, p.test_labels);
    return p;
}

LabeledCube make_subspace_cube(const SubspaceConfig& cfg, Index pixels_per_class, std::size_t width) {
    if (width == 0 || pixels_per_class < 1) throw std::invalid_argument("invalid cube layout");
    const auto bases = class_bases(cfg);
    SplitMix64 rng(cfg.seed ^ 0x5A5A5A5AC0FFEEULL);

    const auto labeled = static_cast<std::size_t>(pixels_per_class) * static_cast<std::size_t>(cfg.classes);
    std::vector<std::size_t> slots(labeled);
    for (std::size_t i = 0; i < labeled; ++i) slots[i] = i;
    shuffle(slots, rng);

    LabeledCube cube;
    cube.width = width;
    cube.height = (labeled + width - 1) / width;
    cube.bands = static_cast<std::size_t>(cfg.bands);
    const std::size_t pixels = cube.pixels();
    cube.data.assign(pixels * cube.bands, 0.0);
    cube.labels.assign(pixels, 0);

    auto write_pixel = [&](std::size_t p, const VectorXd& x) {
        for (std::size_t b = 0; b < cube.bands; ++b) cube.data[b * pixels + p] = x[static_cast<Index>(b)];
    };
    for (std::size_t i = 0; i < labeled; ++i) {
        const auto cls = static_cast<int>(i / static_cast<std::size_t>(pixels_per_class));
        write_pixel(slots[i], draw_sample(bases[static_cast<std::size_t>(cls)], cfg.noise, rng));
        cube.labels[slots[i]] = cls + 1;
    }
    // Unlabeled filler: isotropic noise spectra.
    for (std::size_t p = labeled; p < pixels; ++p) {
        VectorXd x(cfg.bands);
        for (Index b = 0; b < cfg.bands; ++b) x[b] = rng.normal();
        write_pixel(p, x.normalized());
    }
    return cube;
}

GradCheckInstance make_gradcheck_instance(Index bands, Index atoms, int classes, int stages, std::uint64_t seed,
                                          double min_margin) {
    for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
        const std::uint64_t s = seed * 7919ULL + attempt;
        GradCheckInstance inst;
        inst.dict = random_dictionary(bands, atoms, classes, s);
        SplitMix64 rng(s ^ 0x9E3779B97F4A7C15ULL);
        inst.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))) + 1;

        // A pixel mostly explained by its own class plus an off-class component.
        const auto own = inst.dict.sub_dictionary(inst.label);
        VectorXd x = VectorXd::Zero(bands);
        for (Index j = 0; j < own.cols(); ++j) x += rng.normal() * own.col(j);
        for (Index i = 0; i < bands; ++i) x[i] += 0.5 * rng.normal();
        inst.x = x.normalized();

        inst.params = NetParams::defaults(stages);
        for (double& r : inst.params.rho) r = 0.5 + rng.uniform();
        for (double& e : inst.params.eta) e = 0.05 + 0.1 * rng.uniform();
        for (double& t : inst.params.tau) t = 0.5 + rng.uniform();

        const GramCache cache(inst.dict);
        if (kink_margin(forward(cache, inst.x, inst.params).trace, inst.params) >= min_margin) return inst;
    }
    throw std::runtime_error("could not draw a kink-free gradient-check instance");
}

}  // namespace asdn::synthetic
