#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace asdn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Class-partitioned dictionary D = [D_1, ..., D_C]. Class i (1-based) owns
/// columns [offsets[i-1], offsets[i]).
class Dictionary {
public:
    Dictionary() = default;

    Index bands() const { return atoms_.rows(); }
    Index atoms_count() const { return atoms_.cols(); }
    int classes() const { return static_cast<int>(offsets_.size()) - 1; }

    const MatrixXd& atoms() const { return atoms_; }
    const std::vector<Index>& class_offsets() const { return offsets_; }
    const std::vector<int>& labels_per_atom() const { return atom_labels_; }

    Index class_begin(int cls) const { return offsets_[static_cast<std::size_t>(cls - 1)]; }
    Index class_size(int cls) const {
        return offsets_[static_cast<std::size_t>(cls)] - offsets_[static_cast<std::size_t>(cls - 1)];
    }
    auto sub_dictionary(int cls) const { return atoms_.middleCols(class_begin(cls), class_size(cls)); }

    friend Dictionary assemble(const MatrixXd& samples, std::span<const int> labels, int classes);

private:
    MatrixXd atoms_;
    std::vector<Index> offsets_{0};
    std::vector<int> atom_labels_;
};

/// Groups sample columns by class (stable within a class). `classes` = 0
/// means C = max label. Throws if a label lies outside 1..C or a class in
/// 1..C has no columns.
Dictionary assemble(const MatrixXd& samples, std::span<const int> labels, int classes = 0);

/// Quantities shared by every solver on one dictionary: the Gram matrix DᵀD
/// and Cholesky factors of (DᵀD + ρI), memoized per exact ρ value.
///
/// The cache keeps a reference to the dictionary, which must outlive it.
/// Lookups are safe from many threads; a missing factor is computed outside
/// the lock and published under an exclusive lock. When more than
/// `capacity` factors are held the oldest is dropped; callers hold factors
/// through shared_ptr so eviction never invalidates one in use.
class GramCache {
public:
    using Factor = Eigen::LLT<MatrixXd>;

    explicit GramCache(const Dictionary& dict, std::size_t capacity = 64);

    const Dictionary& dictionary() const { return *dict_; }
    const MatrixXd& gram() const { return gram_; }

    VectorXd dtx(const VectorXd& x) const { return dict_->atoms().transpose() * x; }

    /// Factorization of (DᵀD + rho I). rho must be positive.
    std::shared_ptr<const Factor> factor(double rho) const;

    /// Solves (DᵀD + rho I) w = rhs.
    VectorXd solve_regularized(double rho, const VectorXd& rhs) const;

    std::size_t cached_factors() const;

private:
    const Dictionary* dict_;
    MatrixXd gram_;
    std::size_t capacity_;

    mutable std::shared_mutex mutex_;
    mutable std::map<double, std::shared_ptr<const Factor>> factors_;
    mutable std::deque<double> insertion_order_;
};

}  // namespace asdn
