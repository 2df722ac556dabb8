#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "sskd/clustering.hpp"

#include <set>

using namespace sskd;

namespace {

Matrix column(std::initializer_list<double> v) {
    Matrix m(static_cast<Index>(v.size()), 1);
    Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

Matrix uniform_points(Rng &rng, Index n, Index d, double extent) {
    Matrix p(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j) p(i, j) = rng.uniform(0, extent);
    return p;
}

} // namespace

TEST_CASE("fuse_views") {
    RowVector v(3);
    v << 1, 2, 2;
    const Matrix one = v;
    CHECK((fuse_views(one, one, one) - one / 3.0).cwiseAbs().maxCoeff() <= 1e-15);

    Matrix a(1, 2), b(1, 2), c(1, 2);
    a << 1, 0;
    b << 0, 1;
    c << -1, 0;
    const Matrix f = fuse_views(a, b, c);
    CHECK(std::abs(f(0, 0)) <= 1e-15);
    CHECK(f(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(fuse_views(c, a, b) == f);
    CHECK(fuse_views(b, c, a) == f);
    CHECK_THROWS_AS(fuse_views(a, b, Matrix::Zero(1, 3)), std::invalid_argument);
}

TEST_CASE("fused features have unit norm") {
    Rng rng(1, 0);
    const Matrix f = fuse_views(oracle::random_matrix(rng, 20, 8), oracle::random_matrix(rng, 20, 8),
                                oracle::random_matrix(rng, 20, 8));
    for (Index i = 0; i < f.rows(); ++i) CHECK(std::abs(f.row(i).norm() - 1.0) <= 1e-12);
}

TEST_CASE("dbscan chain reachability and isolated points") {
    const DbscanConfig cfg{0.15, 2, Metric::euclidean};
    const auto chain = dbscan(column({0, 0.1, 0.2}), cfg);
    CHECK(chain == std::vector<int>{0, 0, 0});
    const auto with_far = dbscan(column({0, 0.1, 0.2, 10}), cfg);
    CHECK(with_far == std::vector<int>{0, 0, 0, kOutlier});
}

TEST_CASE("dbscan border points join the first expanded cluster") {
    // 0 and 1.0 are cores; 0.5 reaches both but has only three neighbors
    const DbscanConfig cfg{0.55, 4, Metric::euclidean};
    const auto labels = dbscan(column({0, -0.1, -0.2, 0.5, 1.0, 1.1, 1.2}), cfg);
    CHECK(labels == std::vector<int>{0, 0, 0, 0, 1, 1, 1});
}

TEST_CASE("dbscan matches the brute-force reference") {
    Rng rng(5, 0);
    const Matrix pts = uniform_points(rng, 200, 2, 4.0);
    const DbscanConfig cfg{0.2, 4, Metric::euclidean};
    const auto mine = dbscan(pts, cfg);
    const auto ref = oracle::dbscan(pts, 0.2, 4, false);
    CHECK(oracle::to_partition(mine) == oracle::to_partition(ref));
    // sanity: the instance has several clusters and outliers
    const std::set<int> distinct(mine.begin(), mine.end());
    CHECK(distinct.size() > 3);
    CHECK(distinct.count(kOutlier) == 1);
}

TEST_CASE("dbscan matches the reference under cosine distance") {
    Rng rng(6, 0);
    for (int t = 0; t < 10; ++t) {
        const Matrix pts = l2_normalize_rows(oracle::random_matrix(rng, 120, 3));
        const DbscanConfig cfg{0.05, 3, Metric::cosine};
        CHECK(oracle::to_partition(dbscan(pts, cfg)) == oracle::to_partition(oracle::dbscan(pts, 0.05, 3, true)));
    }
}

TEST_CASE("dbscan partition does not depend on point order") {
    Rng rng(7, 0);
    const Matrix pts = uniform_points(rng, 150, 2, 3.0);
    const DbscanConfig cfg{0.25, 4, Metric::euclidean};
    const auto base = dbscan(pts, cfg);
    std::vector<Index> perm(150);
    std::iota(perm.begin(), perm.end(), Index{0});
    rng.shuffle(std::span<Index>(perm));
    Matrix shuffled(150, 2);
    for (Index i = 0; i < 150; ++i) shuffled.row(i) = pts.row(perm[static_cast<std::size_t>(i)]);
    const auto other = dbscan(shuffled, cfg);
    std::vector<int> back(150);
    for (std::size_t i = 0; i < 150; ++i) back[static_cast<std::size_t>(perm[i])] = other[i];
    // border points shared by two clusters may move, so compare cores only
    std::vector<int> core_base, core_back;
    for (Index i = 0; i < 150; ++i) {
        int nb = 0;
        for (Index j = 0; j < 150; ++j) nb += (pts.row(i) - pts.row(j)).norm() <= 0.25;
        if (nb >= 4) {
            core_base.push_back(base[static_cast<std::size_t>(i)]);
            core_back.push_back(back[static_cast<std::size_t>(i)]);
        }
    }
    CHECK(oracle::to_partition(core_base) == oracle::to_partition(core_back));
}

TEST_CASE("every cluster has a core point") {
    Rng rng(8, 0);
    const Matrix pts = uniform_points(rng, 200, 2, 4.0);
    const DbscanConfig cfg{0.2, 4, Metric::euclidean};
    const auto p = assign_pseudo_labels(pts, cfg);
    // a cluster may hold fewer than min_pts members when an earlier cluster
    // already claimed some of its core's border neighbors
    for (int c = 0; c < p.num_clusters; ++c) {
        int members = 0;
        bool has_core = false;
        for (Index i = 0; i < 200; ++i) {
            if (p.assignment[static_cast<std::size_t>(i)] != c) continue;
            ++members;
            int nb = 0;
            for (Index j = 0; j < 200; ++j) nb += (pts.row(i) - pts.row(j)).norm() <= 0.2;
            has_core = has_core || nb >= 4;
        }
        CHECK(members >= 2);
        CHECK(has_core);
    }
}

TEST_CASE("assign_pseudo_labels") {
    SUBCASE("identical points form one cluster") {
        const Matrix pts = Matrix::Ones(6, 3) / std::sqrt(3.0);
        const auto p = assign_pseudo_labels(pts, DbscanConfig{0.1, 4, Metric::cosine});
        CHECK(p.num_clusters == 1);
        CHECK(p.outlier_count() == 0);
    }
    SUBCASE("tiny eps leaves only outliers") {
        Rng rng(9, 0);
        const Matrix pts = l2_normalize_rows(oracle::random_matrix(rng, 30, 4));
        const auto p = assign_pseudo_labels(pts, DbscanConfig{1e-12, 2, Metric::cosine});
        CHECK(p.num_clusters == 0);
        CHECK(p.outlier_count() == 30);
    }
    SUBCASE("labels are numbered by first appearance") {
        const auto p = assign_pseudo_labels(column({5, 0, 5.1, 0.1, 9, 5.05, 0.05}),
                                            DbscanConfig{0.2, 3, Metric::euclidean});
        CHECK(p.assignment == std::vector<int>{0, 1, 0, 1, kOutlier, 0, 1});
        CHECK(p.num_clusters == 2);
    }
}

TEST_CASE("dbscan config validation") {
    CHECK_THROWS_AS((DbscanConfig{0.0, 4, Metric::cosine}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((DbscanConfig{0.1, 1, Metric::cosine}.validate()), std::invalid_argument);
}
