#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sskd/synthdata.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

using namespace sskd;

namespace {

std::string temp_path(const std::string &name) {
    return (std::filesystem::temp_directory_path() / ("sskd_test_" + name)).string();
}

void write_file(const std::string &path, const std::string &text) { std::ofstream(path) << text; }

DomainSpec small_spec() {
    DomainSpec s;
    s.n_identities = 5;
    s.samples_per_identity = 4;
    s.n_cameras = 2;
    s.d_in = 6;
    return s;
}

} // namespace

TEST_CASE("generate_domain counts identities and cameras") {
    const auto d = generate_domain(small_spec(), 1, Domain::source);
    CHECK(d.size() == 20);
    CHECK(d.dim() == 6);
    std::map<int, int> per_id;
    for (const auto &id : d.identities) {
        REQUIRE(id.has_value());
        ++per_id[*id];
    }
    CHECK(per_id.size() == 5);
    for (const auto &[id, count] : per_id) CHECK(count == 4);
    for (Index i = 0; i < d.size(); ++i) CHECK(d.cameras[static_cast<std::size_t>(i)] == (i % 4) % 2);
}

TEST_CASE("generate_domain is deterministic") {
    const auto spec = bench_v1().target;
    const auto a = generate_domain(spec, 42, Domain::target);
    const auto b = generate_domain(spec, 42, Domain::target);
    CHECK(a.features == b.features);
    CHECK(a.identities == b.identities);
    CHECK(a.cameras == b.cameras);
    CHECK(generate_domain(spec, 43, Domain::target).features != a.features);
}

TEST_CASE("noise-free samples equal their identity mean") {
    auto spec = small_spec();
    spec.intra_class_sigma = 0;
    spec.camera_shift_sigma = 0;
    const auto d = generate_domain(spec, 3, Domain::source);
    for (Index i = 0; i < d.size(); ++i) {
        const Index first = (i / 4) * 4;
        CHECK(d.features.row(i) == d.features.row(first));
    }
    CHECK(d.features.row(0) != d.features.row(4));
}

TEST_CASE("identity means stay inside a shared low-rank subspace") {
    auto spec = small_spec();
    spec.n_identities = 20;
    spec.d_in = 10;
    spec.identity_rank = 3;
    spec.intra_class_sigma = 0;
    spec.camera_shift_sigma = 0;
    const auto src = generate_domain(spec, 9, Domain::source);
    const auto tgt = generate_domain(spec, 9, Domain::target);
    Matrix both(src.size() + tgt.size(), spec.d_in);
    both << src.features, tgt.features;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(both);
    const auto s = svd.singularValues();
    CHECK(s(2) > 1e-3);
    CHECK(s(3) <= 1e-10 * s(0));
}

TEST_CASE("nearest-centroid classification is perfect without intra-class noise") {
    auto spec = bench_v1().source;
    spec.intra_class_sigma = 1e-9;
    const auto d = generate_domain(spec, 42, Domain::source);
    Matrix centroids = Matrix::Zero(spec.n_identities, d.dim());
    for (Index i = 0; i < d.size(); ++i) centroids.row(*d.identities[static_cast<std::size_t>(i)]) += d.features.row(i);
    centroids /= spec.samples_per_identity;
    int correct = 0;
    for (Index i = 0; i < d.size(); ++i) {
        Index best = 0;
        (centroids.rowwise() - d.features.row(i)).rowwise().squaredNorm().minCoeff(&best);
        correct += best == *d.identities[static_cast<std::size_t>(i)];
    }
    // camera offsets are small next to the spread of identity means
    CHECK(correct == d.size());
}

TEST_CASE("domain spec validation") {
    auto spec = small_spec();
    spec.n_identities = 0;
    CHECK_THROWS_AS(generate_domain(spec, 1, Domain::source), std::invalid_argument);
    spec = small_spec();
    spec.intra_class_sigma = -1;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = small_spec();
    spec.domain_rotation_angle = 4.0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = small_spec();
    spec.identity_rank = 7;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("augment_view") {
    Rng seed_rng(4, 0);
    Vector x(8);
    for (Index i = 0; i < 8; ++i) x(i) = seed_rng.normal();

    SUBCASE("identity configuration") {
        Rng rng(1, 0);
        CHECK(augment_view(x, AugmentSpec{}, rng) == x);
    }
    SUBCASE("full mask gives zeros") {
        Rng rng(1, 0);
        CHECK(augment_view(x, AugmentSpec{0.3, 1.0, 0.5, 2.0}, rng).isZero(0));
    }
    SUBCASE("seeded determinism, shape and finiteness") {
        const AugmentSpec spec{0.2, 0.25, 0.8, 1.2};
        Rng a(2, 5), b(2, 5);
        const Vector va = augment_view(x, spec, a);
        CHECK(va == augment_view(x, spec, b));
        CHECK(va.size() == x.size());
        CHECK(va.allFinite());
        CHECK((va.array() == 0).count() == 2);
    }
    SUBCASE("scale only") {
        Rng rng(3, 0);
        const Vector v = augment_view(x, AugmentSpec{0, 0, 0.5, 2.0}, rng);
        const double ratio = v(0) / x(0);
        CHECK(ratio >= 0.5);
        CHECK(ratio <= 2.0);
        CHECK((v - ratio * x).norm() <= 1e-12 * x.norm());
    }
}

TEST_CASE("augment spec validation") {
    CHECK_THROWS_AS((AugmentSpec{0, 1.5, 1, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((AugmentSpec{0, 0, 0, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((AugmentSpec{0, 0, 2, 1}.validate()), std::invalid_argument);
    for (const auto &s : default_view_specs()) CHECK_NOTHROW(s.validate());
}

TEST_CASE("embedding files") {
    SUBCASE("well-formed file") {
        const auto p = temp_path("ok.csv");
        write_file(p, "id,camera,f0,f1\n0,0,1.5,2\n,1,-3,4e-2\n7,2,0,0\n");
        const auto d = load_embeddings(p, Domain::target);
        CHECK(d.size() == 3);
        CHECK(d.dim() == 2);
        CHECK(d.identities[0] == 0);
        CHECK_FALSE(d.identities[1].has_value());
        CHECK(d.identities[2] == 7);
        CHECK(d.cameras[2] == 2);
        CHECK(d.features(1, 1) == 0.04);
        CHECK_FALSE(d.fully_labeled());
        std::remove(p.c_str());
    }
    SUBCASE("missing feature names its line") {
        const auto p = temp_path("ragged.csv");
        write_file(p, "id,camera,f0,f1\n0,0,1,2\n1,0,3\n");
        try {
            load_embeddings(p, Domain::source);
            FAIL("expected a CsvError");
        } catch (const CsvError &e) {
            CHECK(e.line() == 3);
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
        std::remove(p.c_str());
    }
    SUBCASE("non-numeric feature and negative camera") {
        const auto p = temp_path("bad.csv");
        write_file(p, "id,camera,f0\n0,0,x\n");
        CHECK_THROWS_AS(load_embeddings(p, Domain::source), CsvError);
        write_file(p, "id,camera,f0\n0,-1,1\n");
        CHECK_THROWS_WITH_AS(load_embeddings(p, Domain::source), doctest::Contains("line 2"), CsvError);
        std::remove(p.c_str());
    }
    SUBCASE("round trip of a generated domain") {
        const auto p = temp_path("round.csv");
        const auto d = generate_domain(bench_v1().target, 42, Domain::target);
        save_embeddings(p, d);
        const auto back = load_embeddings(p, Domain::target);
        CHECK((back.features - d.features).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(back.identities == d.identities);
        CHECK(back.cameras == d.cameras);
        std::remove(p.c_str());
    }
}

TEST_CASE("dataset helpers") {
    const auto d = generate_domain(small_spec(), 2, Domain::target);
    const auto hidden = d.without_identities();
    CHECK(hidden.features == d.features);
    for (const auto &id : hidden.identities) CHECK_FALSE(id.has_value());
    const auto sub = d.subset({3, 0});
    CHECK(sub.size() == 2);
    CHECK(sub.features.row(0) == d.features.row(3));
    CHECK(sub.identities[1] == d.identities[0]);
    const auto s = d.sample(5);
    CHECK(s.features == d.features.row(5).transpose());
    CHECK(s.camera == d.cameras[5]);
}
