#include "asdn/dictionary.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>

namespace asdn {

Dictionary assemble(const MatrixXd& samples, std::span<const int> labels, int classes) {
    if (static_cast<Index>(labels.size()) != samples.cols()) {
        throw std::invalid_argument("assemble: one label per sample column required");
    }
    if (classes <= 0) classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    if (classes <= 0) throw std::invalid_argument("assemble: no classes");

    std::vector<Index> counts(static_cast<std::size_t>(classes), 0);
    for (int l : labels) {
        if (l < 1 || l > classes) {
            throw std::invalid_argument("assemble: label " + std::to_string(l) + " outside 1.." +
                                        std::to_string(classes));
        }
        ++counts[static_cast<std::size_t>(l - 1)];
    }
    for (int c = 0; c < classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            throw std::invalid_argument("assemble: class " + std::to_string(c + 1) + " is empty");
        }
    }

    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });

    Dictionary dict;
    dict.atoms_.resize(samples.rows(), samples.cols());
    dict.atom_labels_.reserve(labels.size());
    for (std::size_t j = 0; j < order.size(); ++j) {
        dict.atoms_.col(static_cast<Index>(j)) = samples.col(static_cast<Index>(order[j]));
        dict.atom_labels_.push_back(labels[order[j]]);
    }
    dict.offsets_.assign(1, 0);
    for (Index n : counts) dict.offsets_.push_back(dict.offsets_.back() + n);
    return dict;
}

GramCache::GramCache(const Dictionary& dict, std::size_t capacity)
    : dict_(&dict), capacity_(std::max<std::size_t>(capacity, 1)) {
    const auto& d = dict.atoms();
    gram_ = MatrixXd::Zero(d.cols(), d.cols());
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(d.transpose());
    gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
}

std::shared_ptr<const GramCache::Factor> GramCache::factor(double rho) const {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    {
        std::shared_lock lock(mutex_);
        if (auto it = factors_.find(rho); it != factors_.end()) return it->second;
    }

    MatrixXd system = gram_;
    system.diagonal().array() += rho;
    auto fresh = std::make_shared<const Factor>(system);
    if (fresh->info() != Eigen::Success) {
        throw std::runtime_error("Cholesky factorization of (DtD + rho I) failed");
    }

    std::unique_lock lock(mutex_);
    auto [it, inserted] = factors_.emplace(rho, fresh);
    auto result = it->second;
    if (inserted) {
        insertion_order_.push_back(rho);
        while (factors_.size() > capacity_) {
            factors_.erase(insertion_order_.front());
            insertion_order_.pop_front();
        }
    }
    return result;
}

VectorXd GramCache::solve_regularized(double rho, const VectorXd& rhs) const {
    if (rhs.size() != gram_.rows()) throw std::invalid_argument("solve_regularized: rhs length mismatch");
    return factor(rho)->solve(rhs);
}

std::size_t GramCache::cached_factors() const {
    std::shared_lock lock(mutex_);
    return factors_.size();
}

}  // namespace asdn
