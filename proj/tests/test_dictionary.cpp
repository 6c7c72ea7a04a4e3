#include <thread>

#include <gtest/gtest.h>

#include "asdn/dictionary.hpp"
#include "asdn/synthetic.hpp"

using namespace asdn;

TEST(Assemble, GroupsColumnsByClass) {
    MatrixXd s(2, 4);
    s << 10, 20, 30, 40,
         11, 21, 31, 41;
    const std::vector<int> labels{2, 1, 2, 1};
    const Dictionary d = assemble(s, labels);
    EXPECT_EQ(d.classes(), 2);
    EXPECT_EQ(d.class_offsets(), (std::vector<Index>{0, 2, 4}));
    EXPECT_EQ(d.labels_per_atom(), (std::vector<int>{1, 1, 2, 2}));
    // Stable: original relative order is kept inside each class.
    EXPECT_EQ(d.atoms()(0, 0), 20);
    EXPECT_EQ(d.atoms()(0, 1), 40);
    EXPECT_EQ(d.atoms()(0, 2), 10);
    EXPECT_EQ(d.atoms()(0, 3), 30);
    EXPECT_EQ(d.sub_dictionary(2).cols(), 2);
}

TEST(Assemble, SingleClass) {
    const std::vector<int> labels{1, 1, 1};
    const Dictionary d = assemble(MatrixXd::Ones(4, 3), labels);
    EXPECT_EQ(d.class_offsets(), (std::vector<Index>{0, 3}));
}

TEST(Assemble, RejectsEmptyClassesAndBadLabels) {
    const MatrixXd s = MatrixXd::Ones(2, 2);
    const std::vector<int> skip{1, 3}, zero{0, 1}, short_list{1};
    EXPECT_THROW((void)assemble(s, skip), std::invalid_argument);
    EXPECT_THROW((void)assemble(s, zero), std::invalid_argument);
    EXPECT_THROW((void)assemble(s, short_list), std::invalid_argument);
    const std::vector<int> ok{1, 2};
    EXPECT_THROW((void)assemble(s, ok, 3), std::invalid_argument);  // class 3 declared but empty
}

TEST(GramCache, ZeroDictionaryScalesRhs) {
    const std::vector<int> labels{1, 1, 1};
    const Dictionary d = assemble(MatrixXd::Zero(5, 3), labels);
    const GramCache cache(d);
    const VectorXd b = (VectorXd(3) << 1.0, -4.0, 6.0).finished();
    EXPECT_TRUE(cache.solve_regularized(2.0, b).isApprox(b / 2.0, 1e-15));
}

TEST(GramCache, OrthonormalHalvesRhs) {
    const MatrixXd q = synthetic::random_orthonormal(6, 3);
    const std::vector<int> labels(6, 1);
    const Dictionary d = assemble(q, labels);
    const GramCache cache(d);
    const VectorXd b = VectorXd::LinSpaced(6, -1.0, 2.0);
    EXPECT_LE((cache.solve_regularized(1.0, b) - b / 2.0).norm(), 1e-12);
}

TEST(GramCache, MatchesDenseSolve) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dictionary d = synthetic::random_dictionary(30, 60, 3, seed);
        const GramCache cache(d);
        const VectorXd b = synthetic::gaussian_matrix(60, 1, seed + 100).col(0);
        for (double rho : {1e-3, 0.5, 1.0, 10.0}) {
            const MatrixXd m = d.atoms().transpose() * d.atoms() + rho * MatrixXd::Identity(60, 60);
            const VectorXd dense = m.fullPivLu().solve(b);
            const VectorXd w = cache.solve_regularized(rho, b);
            // Backward-error bound for an SPD solve.
            EXPECT_LE((m * w - b).norm(), 1e-10 * (m.norm() * w.norm() + b.norm()));
            EXPECT_LE((w - dense).norm(), 1e-8 * dense.norm());
        }
    }
}

TEST(GramCache, CachesFactorsPerRhoWithEviction) {
    const Dictionary d = synthetic::random_dictionary(10, 12, 2, 1);
    const GramCache cache(d, 3);
    const auto f1 = cache.factor(1.0);
    EXPECT_EQ(cache.factor(1.0), f1);
    EXPECT_EQ(cache.cached_factors(), 1u);
    (void)cache.factor(2.0);
    (void)cache.factor(3.0);
    (void)cache.factor(4.0);
    EXPECT_EQ(cache.cached_factors(), 3u);
    // Evicted factors stay valid for holders.
    EXPECT_TRUE(f1->info() == Eigen::Success);
    EXPECT_THROW((void)cache.factor(0.0), std::invalid_argument);
}

TEST(GramCache, ConcurrentReadersSeeOneFactor) {
    const Dictionary d = synthetic::random_dictionary(20, 30, 2, 2);
    const GramCache cache(d);
    std::vector<std::shared_ptr<const GramCache::Factor>> got(8);
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < got.size(); ++t) {
        threads.emplace_back([&, t] { got[t] = cache.factor(0.7); });
    }
    for (auto& th : threads) th.join();
    for (const auto& f : got) EXPECT_EQ(f, got[0]);
    EXPECT_EQ(cache.cached_factors(), 1u);
}
