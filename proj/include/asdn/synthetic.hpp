#pragma once

#include <cstdint>
#include <vector>

#include "asdn/dataset.hpp"
#include "asdn/dictionary.hpp"
#include "asdn/network.hpp"

namespace asdn::synthetic {

/// bands x cols matrix of i.i.d. N(0, 1) entries.
MatrixXd gaussian_matrix(Index bands, Index cols, std::uint64_t seed);

/// Gaussian matrix with unit-norm columns.
MatrixXd unit_columns(Index bands, Index cols, std::uint64_t seed);

/// Random unit-column dictionary with atoms split evenly over `classes`.
Dictionary random_dictionary(Index bands, Index atoms, int classes, std::uint64_t seed);

/// Orthonormal bands x bands matrix (Q factor of a Gaussian matrix).
MatrixXd random_orthonormal(Index bands, std::uint64_t seed);

/// Classes living on independent random low-dimensional subspaces.
/// Every sample is basis_c * N(0, I) scaled to unit norm, plus N(0, noise²)
/// per band, then rescaled to unit norm.
struct SubspaceConfig {
    int classes = 3;
    Index bands = 50;
    Index subspace_dim = 5;
    Index atoms_per_class = 10;
    Index train_per_class = 40;
    Index test_per_class = 200;
    double noise = 0.01;
    std::uint64_t seed = 1;
};

struct SubspaceProblem {
    Dictionary dict;
    MatrixXd train_pixels;
    std::vector<int> train_labels;
    MatrixXd test_pixels;
    std::vector<int> test_labels;
    std::vector<MatrixXd> bases;  // orthonormal basis per class
};

SubspaceProblem make_subspace_problem(const SubspaceConfig& cfg);

/// The same generator laid out as an HSI cube: `pixels_per_class` labeled
/// pixels per class scattered over a `width`-wide grid, with unlabeled
/// filler pixels in the last row.
LabeledCube make_subspace_cube(const SubspaceConfig& cfg, Index pixels_per_class, std::size_t width = 20);

/// A random network gradient-check problem whose forward pass stays at
/// least `min_margin` away from every soft-threshold kink. Draws are
/// retried with derived seeds until the margin holds.
struct GradCheckInstance {
    Dictionary dict;
    VectorXd x;
    int label = 1;
    NetParams params;
};

GradCheckInstance make_gradcheck_instance(Index bands, Index atoms, int classes, int stages, std::uint64_t seed,
                                          double min_margin = 1e-4);

}  // namespace asdn::synthetic
