#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "sskd/model.hpp"

using namespace sskd;

namespace {

const ModelShape kShape{5, 7, 4, 3};

PeerModel random_model(std::uint64_t seed) {
    Rng rng(seed, 0);
    PeerModel m = init_model(kShape, rng);
    // nonzero biases so their gradients are exercised too
    for (auto t : tensors(m))
        for (Index i = 0; i < t.size(); ++i) t(i) += 0.1 * rng.normal();
    return m;
}

Vector flatten(const PeerModel &m) {
    std::vector<double> out;
    for (auto t : tensors(m)) out.insert(out.end(), t.data(), t.data() + t.size());
    return Eigen::Map<const Vector>(out.data(), static_cast<Index>(out.size()));
}

PeerModel unflatten(const PeerModel &like, const Vector &v) {
    PeerModel m = like;
    Index off = 0;
    for (auto t : tensors(m)) {
        t = v.segment(off, t.size());
        off += t.size();
    }
    return m;
}

std::vector<double> to_std(const Vector &v) { return {v.data(), v.data() + v.size()}; }

} // namespace

TEST_CASE("forward with zero parameters") {
    const PeerModel m = random_model(1).zeros_like();
    Rng rng(2, 0);
    const auto out = forward(m, oracle::random_matrix(rng, 3, 5));
    CHECK(out.h.isZero(0));
    CHECK(out.z.isZero(0));
    CHECK(out.h.rows() == 3);
    CHECK(out.z.cols() == 3);
}

TEST_CASE("forward is batch consistent and pure") {
    const PeerModel m = random_model(3);
    Rng rng(4, 0);
    const Matrix x = oracle::random_matrix(rng, 6, 5);
    const auto batch = forward(m, x);
    for (Index i = 0; i < x.rows(); ++i) {
        const auto single = forward(m, Matrix(x.row(i)));
        CHECK((single.h.row(0) - batch.h.row(i)).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK((single.z.row(0) - batch.z.row(i)).cwiseAbs().maxCoeff() <= 1e-14);
    }
    const auto again = forward(m, x);
    CHECK(again.h == batch.h);
    CHECK(again.z == batch.z);
    CHECK(encode(m.encoder, x) == batch.h);
    CHECK_THROWS_AS(forward(m, Matrix::Zero(2, 4)), std::invalid_argument);
}

TEST_CASE("backward with zero upstream gradient") {
    const PeerModel m = random_model(5);
    Rng rng(6, 0);
    const auto out = forward(m, oracle::random_matrix(rng, 4, 5));
    const PeerModel g = backward(m, out.cache, Matrix::Zero(4, 4), Matrix::Zero(4, 3));
    CHECK(flatten(g).isZero(0));
    CHECK_THROWS_AS(backward(m, out.cache, Matrix::Zero(3, 4), Matrix::Zero(4, 3)), std::invalid_argument);
}

TEST_CASE("backward matches finite differences") {
    Rng rng(7, 0);
    for (int inst = 0; inst < 20; ++inst) {
        const PeerModel m = random_model(100 + static_cast<std::uint64_t>(inst));
        const Matrix x = oracle::random_matrix(rng, 4, 5);
        const Vector p0 = flatten(m);
        const auto out = forward(m, x);

        SUBCASE("sum of logits") {
            const auto f = [&](const Vector &p) { return forward(unflatten(m, p), x).z.sum(); };
            const Vector g = flatten(backward(m, out.cache, Matrix::Zero(4, 4), Matrix::Ones(4, 3)));
            CHECK(max_relative_error(g, finite_diff_gradient(f, p0, 1e-5)) <= 1e-5);
        }
        SUBCASE("squared norm of the representation") {
            const auto f = [&](const Vector &p) { return forward(unflatten(m, p), x).h.squaredNorm(); };
            const Vector g = flatten(backward(m, out.cache, 2 * out.h, Matrix::Zero(4, 3)));
            CHECK(max_relative_error(g, finite_diff_gradient(f, p0, 1e-5)) <= 1e-5);
        }
    }
}

TEST_CASE("ensemble construction copies students into teachers") {
    const PeerEnsemble ens({random_model(1), random_model(2), random_model(3)}, 0.9);
    for (int k = 0; k < 3; ++k)
        CHECK(flatten(ens.teachers[static_cast<std::size_t>(k)]) == flatten(ens.students[static_cast<std::size_t>(k)]));
    CHECK_THROWS_AS(PeerEnsemble({random_model(1), random_model(2), random_model(3)}, 1.0), std::invalid_argument);
}

TEST_CASE("ema update") {
    SUBCASE("rho zero copies the student") {
        PeerEnsemble ens({random_model(1), random_model(2), random_model(3)}, 0.0);
        ens.teachers[1] = random_model(9);
        ema_update(ens);
        for (std::size_t k = 0; k < 3; ++k) CHECK(flatten(ens.teachers[k]) == flatten(ens.students[k]));
        CHECK(ens.iteration == 1);
    }
    SUBCASE("rho one half averages") {
        PeerEnsemble ens({random_model(1), random_model(2), random_model(3)}, 0.5);
        for (auto t : tensors(ens.teachers[0])) t.setConstant(1.0);
        for (auto t : tensors(ens.students[0])) t.setZero();
        ema_update(ens);
        CHECK((flatten(ens.teachers[0]).array() == 0.5).all());
    }
    SUBCASE("geometric decay with frozen students and convexity") {
        const double rho = 0.9;
        PeerEnsemble ens({random_model(1), random_model(2), random_model(3)}, rho);
        for (std::size_t k = 0; k < 3; ++k) ens.teachers[k] = random_model(20 + k);
        std::array<double, 3> gap0{};
        for (std::size_t k = 0; k < 3; ++k) gap0[k] = (flatten(ens.teachers[k]) - flatten(ens.students[k])).norm();
        for (int t = 1; t <= 50; ++t) {
            const PeerEnsemble before = ens;
            ema_update(ens);
            for (std::size_t k = 0; k < 3; ++k) {
                const Vector s = flatten(ens.students[k]), old = flatten(before.teachers[k]),
                             now = flatten(ens.teachers[k]);
                CHECK(((now.array() - old.array().min(s.array())) >= 0).all());
                CHECK(((old.array().max(s.array()) - now.array()) >= 0).all());
                const double gap = (now - s).norm();
                CHECK(std::abs(gap - std::pow(rho, t) * gap0[k]) <= 1e-10);
            }
        }
    }
}

TEST_CASE("adam step") {
    SUBCASE("zero gradient without weight decay is a no-op") {
        PeerModel m = random_model(1);
        const Vector before = flatten(m);
        AdamState st(m, AdamConfig{0.01, 0.9, 0.999, 1e-8, 0.0});
        adam_step(st, m, m.zeros_like());
        CHECK(flatten(m) == before);
    }
    SUBCASE("first step moves by lr against the gradient sign") {
        PeerModel m = random_model(2);
        const Vector before = flatten(m);
        AdamState st(m, AdamConfig{0.01, 0.9, 0.999, 1e-8, 0.0});
        // |g| well above eps so eps / |g| stays below the tolerance
        PeerModel g = random_model(3);
        for (auto t : tensors(g)) t = t.array().sign() * (t.array().abs() + 0.1);
        adam_step(st, m, g);
        const Vector step = flatten(m) - before, gs = flatten(g);
        for (Index i = 0; i < step.size(); ++i)
            CHECK(std::abs(step(i) + 0.01 * (gs(i) > 0 ? 1 : -1)) <= 0.01 * 1e-6);
    }
    SUBCASE("ten steps match the scalar oracle") {
        const AdamConfig cfg{0.003, 0.9, 0.999, 1e-8, 0.0005};
        PeerModel m = random_model(4);
        AdamState st(m, cfg);
        oracle::ScalarAdam ref{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay, {}, {}, 0};
        std::vector<double> p = to_std(flatten(m));
        for (int t = 0; t < 10; ++t) {
            const PeerModel g = random_model(50 + static_cast<std::uint64_t>(t));
            adam_step(st, m, g);
            ref.update(p, to_std(flatten(g)));
        }
        const Vector mine = flatten(m);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(mine(static_cast<Index>(i)) - p[i]) <= 1e-10);
    }
    SUBCASE("non-finite gradient names the tensor") {
        PeerModel m = random_model(5);
        AdamState st(m, AdamConfig{});
        PeerModel g = m.zeros_like();
        g.encoder.b2(1) = std::nan("");
        CHECK_THROWS_WITH_AS(adam_step(st, m, g), doctest::Contains("encoder.b2"), std::domain_error);
    }
}

TEST_CASE("head re-initialization") {
    PeerEnsemble ens({random_model(1), random_model(2), random_model(3)}, 0.99);
    std::array<AdamState, 3> opt{AdamState(ens.students[0], {}), AdamState(ens.students[1], {}),
                                 AdamState(ens.students[2], {})};
    const PeerModel g = random_model(8);
    adam_step(opt[1], ens.students[1], g);
    ema_update(ens);

    SUBCASE("same width still draws fresh weights and syncs the teacher") {
        const Matrix old = ens.students[1].head.w;
        Rng rng(11, 0);
        reinit_head(ens, opt[1], 1, 3, rng);
        CHECK(ens.students[1].head.w != old);
        CHECK(ens.teachers[1].head.w == ens.students[1].head.w);
        CHECK(ens.teachers[1].head.b == ens.students[1].head.b);
        CHECK(ens.students[1].head.b.isZero(0));
        CHECK(opt[1].m.head.w.isZero(0));
        CHECK(opt[1].v.head.b.isZero(0));
        CHECK(opt[1].steps[kFirstHeadTensor] == 0);
        CHECK(opt[1].steps[0] == 1);
        const double bound = 1 / std::sqrt(4.0);
        CHECK(ens.students[1].head.w.cwiseAbs().maxCoeff() <= bound);
    }
    SUBCASE("new width and seeded determinism") {
        PeerEnsemble other = ens;
        AdamState other_opt = opt[2];
        Rng r1(12, 0), r2(12, 0);
        reinit_head(ens, opt[2], 2, 6, r1);
        reinit_head(other, other_opt, 2, 6, r2);
        CHECK(ens.students[2].head.classes() == 6);
        CHECK(ens.students[2].head.w == other.students[2].head.w);
        CHECK(opt[2].m.head.w.rows() == 6);
    }
}

TEST_CASE("centroid head") {
    Matrix h(5, 2);
    h << 1, 0, 3, 0, 0, 2, 0, 4, 9, 9;
    const std::vector<int> labels = {0, 0, 1, 1, -1};
    const HeadParams head = centroid_head(h, labels, 2);
    CHECK(head.w(0, 0) == 2);
    CHECK(head.w(0, 1) == 0);
    CHECK(head.w(1, 1) == 3);
    CHECK(head.b(0) == -2);
    CHECK(head.b(1) == -4.5);
    // logits order classes by distance: (2, 0.5) is closer to (2, 0)
    RowVector x(2);
    x << 2, 0.5;
    const RowVector z = x * head.w.transpose() + head.b;
    CHECK(z(0) > z(1));
    const std::vector<int> missing = {0, 0, 0, 0, 0};
    CHECK_THROWS_AS(centroid_head(h, missing, 2), std::invalid_argument);
}
