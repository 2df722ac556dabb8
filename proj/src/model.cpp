#include "sskd/model.hpp"

#include <cmath>
#include <stdexcept>

namespace sskd {

PeerModel PeerModel::zeros_like() const {
    PeerModel z;
    z.encoder.w1 = Matrix::Zero(encoder.w1.rows(), encoder.w1.cols());
    z.encoder.b1 = RowVector::Zero(encoder.b1.size());
    z.encoder.w2 = Matrix::Zero(encoder.w2.rows(), encoder.w2.cols());
    z.encoder.b2 = RowVector::Zero(encoder.b2.size());
    z.head.w = Matrix::Zero(head.w.rows(), head.w.cols());
    z.head.b = RowVector::Zero(head.b.size());
    return z;
}

std::array<TensorView, kTensorCount> tensors(PeerModel &m) {
    return {TensorView(m.encoder.w1.data(), m.encoder.w1.size()),
            TensorView(m.encoder.b1.data(), m.encoder.b1.size()),
            TensorView(m.encoder.w2.data(), m.encoder.w2.size()),
            TensorView(m.encoder.b2.data(), m.encoder.b2.size()),
            TensorView(m.head.w.data(), m.head.w.size()),
            TensorView(m.head.b.data(), m.head.b.size())};
}

std::array<ConstTensorView, kTensorCount> tensors(const PeerModel &m) {
    return {ConstTensorView(m.encoder.w1.data(), m.encoder.w1.size()),
            ConstTensorView(m.encoder.b1.data(), m.encoder.b1.size()),
            ConstTensorView(m.encoder.w2.data(), m.encoder.w2.size()),
            ConstTensorView(m.encoder.b2.data(), m.encoder.b2.size()),
            ConstTensorView(m.head.w.data(), m.head.w.size()),
            ConstTensorView(m.head.b.data(), m.head.b.size())};
}

std::array<std::pair<Index, Index>, kTensorCount> tensor_shapes(const PeerModel &m) {
    return {std::pair{m.encoder.w1.rows(), m.encoder.w1.cols()},
            std::pair{Index{1}, m.encoder.b1.size()},
            std::pair{m.encoder.w2.rows(), m.encoder.w2.cols()},
            std::pair{Index{1}, m.encoder.b2.size()},
            std::pair{m.head.w.rows(), m.head.w.cols()},
            std::pair{Index{1}, m.head.b.size()}};
}

namespace {

Matrix uniform_block(Index rows, Index cols, double scale, Rng &rng) {
    Matrix w(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-scale, scale);
    return w;
}

RowVector column_sums(const Matrix &m) { return m.colwise().sum(); }

} // namespace

HeadParams init_head(Index d_feat, Index classes, Rng &rng) {
    if (classes < 2) throw std::invalid_argument("init_head: need at least 2 classes");
    HeadParams h;
    h.w = uniform_block(classes, d_feat, 1.0 / std::sqrt(static_cast<double>(d_feat)), rng);
    h.b = RowVector::Zero(classes);
    return h;
}

PeerModel init_model(const ModelShape &shape, Rng &rng) {
    PeerModel m;
    m.encoder.w1 = uniform_block(shape.d_hidden, shape.d_in,
                                 1.0 / std::sqrt(static_cast<double>(shape.d_in)), rng);
    m.encoder.b1 = RowVector::Zero(shape.d_hidden);
    m.encoder.w2 = uniform_block(shape.d_feat, shape.d_hidden,
                                 1.0 / std::sqrt(static_cast<double>(shape.d_hidden)), rng);
    m.encoder.b2 = RowVector::Zero(shape.d_feat);
    m.head = init_head(shape.d_feat, shape.classes, rng);
    return m;
}

Matrix encode(const EncoderParams &enc, const Matrix &x) {
    if (x.cols() != enc.d_in())
        throw std::invalid_argument("encode: input has " + std::to_string(x.cols()) +
                                    " columns, encoder expects " + std::to_string(enc.d_in()));
    Matrix hidden = ((x * enc.w1.transpose()).rowwise() + enc.b1).array().tanh().matrix();
    Matrix h = (hidden * enc.w2.transpose()).rowwise() + enc.b2;
    return h;
}

ForwardResult forward(const PeerModel &m, const Matrix &x) {
    const auto &enc = m.encoder;
    if (x.cols() != enc.d_in())
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                    " columns, encoder expects " + std::to_string(enc.d_in()));
    ForwardResult r;
    r.cache.x = x;
    r.cache.hidden = ((x * enc.w1.transpose()).rowwise() + enc.b1).array().tanh().matrix();
    r.cache.h = (r.cache.hidden * enc.w2.transpose()).rowwise() + enc.b2;
    r.h = r.cache.h;
    r.z = (r.h * m.head.w.transpose()).rowwise() + m.head.b;
    return r;
}

PeerModel backward(const PeerModel &m, const ForwardCache &cache, const Matrix &dh, const Matrix &dz) {
    const Index batch = cache.x.rows();
    if (dh.rows() != batch || dh.cols() != m.encoder.d_feat())
        throw std::invalid_argument("backward: dL/dh shape mismatch");
    if (dz.rows() != batch || dz.cols() != m.head.classes())
        throw std::invalid_argument("backward: dL/dz shape mismatch");

    PeerModel g;
    g.head.w = dz.transpose() * cache.h;
    g.head.b = column_sums(dz);

    const Matrix dh_total = dh + dz * m.head.w;
    g.encoder.w2 = dh_total.transpose() * cache.hidden;
    g.encoder.b2 = column_sums(dh_total);

    const Matrix da = ((dh_total * m.encoder.w2).array() *
                       (1.0 - cache.hidden.array().square()))
                          .matrix();
    g.encoder.w1 = da.transpose() * cache.x;
    g.encoder.b1 = column_sums(da);
    return g;
}

PeerEnsemble::PeerEnsemble(std::array<PeerModel, 3> s, double rho_)
    : students(std::move(s)), teachers(students), rho(rho_) {
    if (!(rho >= 0 && rho < 1)) throw std::invalid_argument("PeerEnsemble: rho must lie in [0, 1)");
}

void ema_update(PeerEnsemble &ens) {
    const double rho = ens.rho;
    for (std::size_t k = 0; k < 3; ++k) {
        auto teacher = tensors(ens.teachers[k]);
        const auto student = tensors(static_cast<const PeerModel &>(ens.students[k]));
        for (std::size_t t = 0; t < kTensorCount; ++t) {
            if (teacher[t].size() != student[t].size())
                throw std::logic_error("ema_update: teacher/student shape mismatch");
            teacher[t] = rho * teacher[t] + (1.0 - rho) * student[t];
        }
    }
    ++ens.iteration;
}

AdamState::AdamState(const PeerModel &like, AdamConfig cfg)
    : config(cfg), m(like.zeros_like()), v(like.zeros_like()) {}

void adam_step(AdamState &state, PeerModel &params, const PeerModel &grads) {
    const auto &cfg = state.config;
    auto p = tensors(params);
    const auto g = tensors(grads);
    auto m = tensors(state.m);
    auto v = tensors(state.v);
    for (std::size_t t = 0; t < kTensorCount; ++t) {
        if (g[t].size() != p[t].size() || m[t].size() != p[t].size())
            throw std::invalid_argument("adam_step: shape mismatch in " + std::string(kTensorNames[t]));
        if (!g[t].allFinite())
            throw std::domain_error("adam_step: non-finite gradient in " + std::string(kTensorNames[t]));
    }
    for (std::size_t t = 0; t < kTensorCount; ++t) {
        const auto step = ++state.steps[t];
        m[t] = cfg.beta1 * m[t] + (1.0 - cfg.beta1) * g[t];
        v[t] = cfg.beta2 * v[t] + (1.0 - cfg.beta2) * g[t].cwiseProduct(g[t]);
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        if (cfg.weight_decay != 0.0) p[t] *= 1.0 - cfg.lr * cfg.weight_decay;
        p[t].array() -= cfg.lr * (m[t].array() / c1) / ((v[t].array() / c2).sqrt() + cfg.eps);
    }
}

HeadParams centroid_head(const Matrix &h, std::span<const int> labels, Index classes) {
    if (classes < 2) throw std::invalid_argument("centroid_head: need at least 2 classes");
    if (static_cast<Index>(labels.size()) != h.rows())
        throw std::invalid_argument("centroid_head: one label per row required");
    HeadParams head;
    head.w = Matrix::Zero(classes, h.cols());
    std::vector<double> count(static_cast<std::size_t>(classes), 0.0);
    for (Index i = 0; i < h.rows(); ++i) {
        const int c = labels[static_cast<std::size_t>(i)];
        if (c < 0) continue;
        if (c >= classes) throw std::invalid_argument("centroid_head: label out of range");
        head.w.row(c) += h.row(i);
        count[static_cast<std::size_t>(c)] += 1;
    }
    for (Index c = 0; c < classes; ++c) {
        if (count[static_cast<std::size_t>(c)] == 0)
            throw std::invalid_argument("centroid_head: class " + std::to_string(c) + " has no members");
        head.w.row(c) /= count[static_cast<std::size_t>(c)];
    }
    head.b = -0.5 * head.w.rowwise().squaredNorm().transpose();
    return head;
}

void set_head(PeerEnsemble &ens, AdamState &opt, int peer, HeadParams head) {
    if (peer < 0 || peer > 2) throw std::invalid_argument("set_head: peer must be 0, 1 or 2");
    auto &student = ens.students[static_cast<std::size_t>(peer)];
    if (head.w.cols() != student.encoder.d_feat() || head.b.size() != head.w.rows())
        throw std::invalid_argument("set_head: head shape does not match the encoder");
    student.head = std::move(head);
    ens.teachers[static_cast<std::size_t>(peer)].head = student.head;
    opt.m.head.w = Matrix::Zero(student.head.w.rows(), student.head.w.cols());
    opt.m.head.b = RowVector::Zero(student.head.b.size());
    opt.v.head = opt.m.head;
    for (std::size_t t = kFirstHeadTensor; t < kTensorCount; ++t) opt.steps[t] = 0;
}

void reinit_head(PeerEnsemble &ens, AdamState &opt, int peer, Index classes, Rng &rng) {
    const Index d_feat = ens.students[static_cast<std::size_t>(peer)].encoder.d_feat();
    set_head(ens, opt, peer, init_head(d_feat, classes, rng));
}

} // namespace sskd
