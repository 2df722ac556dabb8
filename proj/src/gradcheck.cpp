#include "sskd/gradcheck.hpp"

#include "sskd/losses.hpp"
#include "sskd/model.hpp"
#include "sskd/rng.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace sskd {

namespace {

constexpr double kStep = 1e-6;
constexpr double kCeTolerance = 1e-5;
constexpr double kTolerance = 1e-3;

Matrix random_matrix(Index rows, Index cols, double scale, Rng &rng) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

// Views a list of matrices as one flat parameter vector.
struct Packing {
    std::vector<std::pair<Index, Index>> shapes;

    Vector pack(const std::vector<const Matrix *> &ms) {
        shapes.clear();
        Index n = 0;
        for (const auto *m : ms) {
            shapes.emplace_back(m->rows(), m->cols());
            n += m->size();
        }
        Vector v(n);
        Index at = 0;
        for (const auto *m : ms) {
            v.segment(at, m->size()) = Eigen::Map<const Vector>(m->data(), m->size());
            at += m->size();
        }
        return v;
    }

    void unpack(const Vector &v, const std::vector<Matrix *> &ms) const {
        Index at = 0;
        for (std::size_t i = 0; i < ms.size(); ++i) {
            const auto [r, c] = shapes[i];
            ms[i]->resize(r, c);
            Eigen::Map<Vector>(ms[i]->data(), r * c) = v.segment(at, r * c);
            at += r * c;
        }
    }
};

double compare(const std::function<double(const Vector &)> &f, const Vector &x, const Vector &analytic) {
    const Vector numeric = finite_diff_gradient<double>(f, x, kStep);
    return max_relative_error(analytic, numeric);
}

std::vector<int> random_labels(Index n, int classes, bool allow_outliers, Rng &rng) {
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto &v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes + (allow_outliers ? 1 : 0)))) -
                          (allow_outliers ? 1 : 0);
    return y;
}

double check_source_ce(Rng &rng) {
    const Index b = 3 + static_cast<Index>(rng.below(6)), c = 2 + static_cast<Index>(rng.below(5));
    const Matrix z0 = random_matrix(b, c, 2.0, rng);
    const auto y = random_labels(b, static_cast<int>(c), false, rng);
    Packing p;
    const Vector x = p.pack({&z0});
    const auto f = [&](const Vector &v) {
        Matrix z;
        p.unpack(v, {&z});
        return source_ce(z, y).value;
    };
    const Matrix g = source_ce(z0, y).grad;
    return compare(f, x, Eigen::Map<const Vector>(g.data(), g.size()));
}

double check_id_loss(Rng &rng) {
    const Index b = 3 + static_cast<Index>(rng.below(6)), c = 2 + static_cast<Index>(rng.below(5));
    const Matrix z0 = random_matrix(b, c, 2.0, rng);
    const auto y = random_labels(b, static_cast<int>(c), false, rng);
    const SmoothingConfig cfg{rng.uniform(0.0, 0.3)};
    Packing p;
    const Vector x = p.pack({&z0});
    const auto f = [&](const Vector &v) {
        Matrix z;
        p.unpack(v, {&z});
        return id_loss(z, y, cfg).value;
    };
    const Matrix g = id_loss(z0, y, cfg).grad;
    return compare(f, x, Eigen::Map<const Vector>(g.data(), g.size()));
}

PeerLogits random_logits(Index b, Index c, Rng &rng) {
    return {random_matrix(b, c, 2.0, rng), random_matrix(b, c, 2.0, rng), random_matrix(b, c, 2.0, rng)};
}

double check_distill(Rng &rng) {
    const Index b = 3 + static_cast<Index>(rng.below(6)), c = 2 + static_cast<Index>(rng.below(5));
    const PeerLogits s0 = random_logits(b, c, rng), t = random_logits(b, c, rng);
    Packing p;
    const Vector x = p.pack({&s0[0], &s0[1], &s0[2]});
    const auto f = [&](const Vector &v) {
        PeerLogits s;
        p.unpack(v, {&s[0], &s[1], &s[2]});
        return distill_loss(s, t).value;
    };
    const auto r = distill_loss(s0, t);
    return compare(f, x, p.pack({&r.grads[0], &r.grads[1], &r.grads[2]}));
}

double check_bnm(Rng &rng) {
    // More rows than classes keeps the singular values distinct and nonzero.
    const Index c = 2 + static_cast<Index>(rng.below(4)), b = c + 2 + static_cast<Index>(rng.below(5));
    const PeerLogits s0 = random_logits(b, c, rng), t = random_logits(b, c, rng);
    Packing p;
    const Vector x = p.pack({&s0[0], &s0[1], &s0[2]});
    const auto f = [&](const Vector &v) {
        PeerLogits s;
        p.unpack(v, {&s[0], &s[1], &s[2]});
        return bnm_loss(s, t).value;
    };
    const auto r = bnm_loss(s0, t);
    return compare(f, x, p.pack({&r.grads[0], &r.grads[1], &r.grads[2]}));
}

double check_ms(Rng &rng) {
    const Index images = 3 + static_cast<Index>(rng.below(5)), d = 4 + static_cast<Index>(rng.below(5));
    const Matrix f0 = l2_normalize_rows(random_matrix(3 * images, d, 1.0, rng));
    std::vector<int> image_of;
    for (Index i = 0; i < images; ++i)
        for (int k = 0; k < 3; ++k) image_of.push_back(static_cast<int>(i));
    const auto labels = random_labels(images, 2, true, rng);
    MsConfig cfg;
    cfg.label_positives = rng.below(2) == 0;
    Packing p;
    const Vector x = p.pack({&f0});
    const auto f = [&](const Vector &v) {
        Matrix feats;
        p.unpack(v, {&feats});
        return ms_loss(feats, image_of, labels, cfg).value;
    };
    const Matrix g = ms_loss(f0, image_of, labels, cfg).grad;
    return compare(f, x, Eigen::Map<const Vector>(g.data(), g.size()));
}

double check_total(Rng &rng) {
    const Index c = 2 + static_cast<Index>(rng.below(3)), b = c + 2 + static_cast<Index>(rng.below(4));
    const Index d = 4 + static_cast<Index>(rng.below(4));
    BatchOutputs batch;
    for (auto &h : batch.h) h = random_matrix(b, d, 1.0, rng);
    batch.student_logits = random_logits(b, c, rng);
    batch.teacher_logits = random_logits(b, c, rng);
    batch.labels = random_labels(b, static_cast<int>(c), true, rng);
    const ObjectiveConfig cfg;
    Packing p;
    const Vector x = p.pack({&batch.h[0], &batch.h[1], &batch.h[2], &batch.student_logits[0],
                             &batch.student_logits[1], &batch.student_logits[2]});
    const auto f = [&](const Vector &v) {
        BatchOutputs probe = batch;
        p.unpack(v, {&probe.h[0], &probe.h[1], &probe.h[2], &probe.student_logits[0], &probe.student_logits[1],
                     &probe.student_logits[2]});
        return evaluate_objective(probe, cfg).total;
    };
    const auto r = evaluate_objective(batch, cfg);
    return compare(f, x, p.pack({&r.dh[0], &r.dh[1], &r.dh[2], &r.dz[0], &r.dz[1], &r.dz[2]}));
}

// L = sum(z) + |h|^2 through the encoder and head, over every parameter.
double check_model(Rng &rng) {
    const ModelShape shape{5, 7, 4, 3};
    const PeerModel m0 = init_model(shape, rng);
    const Matrix x = random_matrix(6, shape.d_in, 1.0, rng);
    const auto objective = [&](const PeerModel &m) {
        const auto r = forward(m, x);
        return r.z.sum() + r.h.squaredNorm();
    };
    const auto views = tensors(m0);
    Vector flat(std::accumulate(views.begin(), views.end(), Index{0},
                                [](Index n, const auto &t) { return n + t.size(); }));
    Index at = 0;
    for (const auto &t : views) {
        flat.segment(at, t.size()) = t;
        at += t.size();
    }
    const auto f = [&](const Vector &v) {
        PeerModel m = m0;
        Index pos = 0;
        for (auto &t : tensors(m)) {
            t = v.segment(pos, t.size());
            pos += t.size();
        }
        return objective(m);
    };
    const auto fwd = forward(m0, x);
    const PeerModel g = backward(m0, fwd.cache, 2.0 * fwd.h, Matrix::Ones(fwd.z.rows(), fwd.z.cols()));
    Vector analytic(flat.size());
    at = 0;
    for (const auto &t : tensors(g)) {
        analytic.segment(at, t.size()) = t;
        at += t.size();
    }
    return compare(f, flat, analytic);
}

} // namespace

std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, int instances) {
    if (instances < 1) throw std::invalid_argument("run_gradcheck_suite: instances must be >= 1");
    struct Case {
        const char *name;
        double tolerance;
        double (*check)(Rng &);
    };
    const Case cases[] = {
        {"source_ce", kCeTolerance, check_source_ce}, {"id_loss", kCeTolerance, check_id_loss},
        {"distill_loss", kCeTolerance, check_distill}, {"bnm_loss", kTolerance, check_bnm},
        {"ms_loss", kTolerance, check_ms},             {"total_loss", kTolerance, check_total},
        {"model_backward", kCeTolerance, check_model},
    };
    std::vector<GradcheckResult> out;
    std::uint64_t stream = 0x4000;
    for (const auto &c : cases) {
        GradcheckResult r{c.name, instances, 0.0, c.tolerance, false};
        Rng rng(seed, stream++);
        for (int i = 0; i < instances; ++i) r.max_rel_error = std::max(r.max_rel_error, c.check(rng));
        r.passed = r.max_rel_error <= c.tolerance;
        out.push_back(r);
    }
    return out;
}

} // namespace sskd
