#include "sskd/losses.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sskd {

void MsConfig::validate() const {
    if (!(alpha > 0 && beta > 0)) throw std::invalid_argument("MsConfig: alpha and beta must be > 0");
    if (!(margin >= -1 && margin <= 1)) throw std::invalid_argument("MsConfig: margin must lie in [-1, 1]");
    if (!(mining_eps >= 0)) throw std::invalid_argument("MsConfig: mining_eps must be >= 0");
}

void SmoothingConfig::validate() const {
    if (!(epsilon >= 0 && epsilon < 1)) throw std::invalid_argument("SmoothingConfig: epsilon must lie in [0, 1)");
}

void LossWeights::validate() const {
    if (!(xi > 0 && xi < 1)) throw std::invalid_argument("LossWeights: xi must lie in (0, 1)");
    if (!(lambda_bnm >= 0 && eta_ms >= 0))
        throw std::invalid_argument("LossWeights: lambda_bnm and eta_ms must be >= 0");
}

namespace {

void check_labels(const Matrix &z, std::span<const int> labels, const char *what) {
    if (static_cast<Index>(labels.size()) != z.rows())
        throw std::invalid_argument(std::string(what) + ": label count does not match batch size");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= z.cols())
            throw std::invalid_argument(std::string(what) + ": label " + std::to_string(labels[i]) +
                                        " out of range at row " + std::to_string(i));
}

// log(1 + sum exp(x)) and the weights exp(x_k) / (1 + sum exp(x)).
double log1p_sum_exp(const std::vector<double> &x, std::vector<double> &weights) {
    double mx = 0.0;
    for (double v : x) mx = std::max(mx, v);
    double denom = std::exp(-mx);
    weights.resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        weights[k] = std::exp(x[k] - mx);
        denom += weights[k];
    }
    for (double &w : weights) w /= denom;
    return mx + std::log(denom);
}

} // namespace

LogitLoss source_ce(const Matrix &z, std::span<const int> labels) {
    check_labels(z, labels, "source_ce");
    const Index batch = z.rows();
    const Matrix logp = log_softmax_rows(z);
    LogitLoss out;
    out.grad = logp.array().exp().matrix();
    for (Index i = 0; i < batch; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        out.value -= logp(i, y);
        out.grad(i, y) -= 1.0;
    }
    out.value /= static_cast<double>(batch);
    out.grad /= static_cast<double>(batch);
    return out;
}

LogitLoss id_loss(const Matrix &z, std::span<const int> labels, const SmoothingConfig &config) {
    config.validate();
    const Index classes = z.cols();
    if (classes < 2) throw std::invalid_argument("id_loss: need at least 2 classes");
    check_labels(z, labels, "id_loss");
    const Index batch = z.rows();
    LogitLoss out;
    out.grad = Matrix::Zero(batch, classes);
    if (batch == 0) return out;

    const double off = config.epsilon / static_cast<double>(classes);
    const double on = 1.0 - config.epsilon + off;
    const Matrix logp = log_softmax_rows(z);
    for (Index i = 0; i < batch; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        for (Index j = 0; j < classes; ++j) {
            const double q = j == y ? on : off;
            out.value -= q * logp(i, j);
            out.grad(i, j) = std::exp(logp(i, j)) - q;
        }
    }
    out.value /= static_cast<double>(batch);
    out.grad /= static_cast<double>(batch);
    return out;
}

MsLoss ms_loss(const Matrix &features, std::span<const int> image_of,
               std::span<const int> image_labels, const MsConfig &config) {
    config.validate();
    const Index n = features.rows();
    if (static_cast<Index>(image_of.size()) != n)
        throw std::invalid_argument("ms_loss: image_of must have one entry per feature row");
    for (int img : image_of)
        if (img < 0 || static_cast<std::size_t>(img) >= image_labels.size())
            throw std::invalid_argument("ms_loss: image index out of range");

    MsLoss out;
    out.grad = Matrix::Zero(n, features.cols());
    if (n == 0) return out;
    const Matrix sim = features * features.transpose();

    std::vector<Index> pos, neg;
    std::vector<double> expo, weights;
    for (Index a = 0; a < n; ++a) {
        const int img_a = image_of[static_cast<std::size_t>(a)];
        const int lab_a = image_labels[static_cast<std::size_t>(img_a)];
        pos.clear();
        neg.clear();
        for (Index k = 0; k < n; ++k) {
            if (k == a) continue;
            const int img_k = image_of[static_cast<std::size_t>(k)];
            const int lab_k = image_labels[static_cast<std::size_t>(img_k)];
            const bool same_label = lab_a != kOutlier && lab_a == lab_k;
            if (img_k == img_a || (config.label_positives && same_label))
                pos.push_back(k);
            else if (img_k != img_a && !same_label)
                neg.push_back(k);
        }

        if (!pos.empty() && !neg.empty()) {
            double min_pos = std::numeric_limits<double>::infinity();
            double max_neg = -std::numeric_limits<double>::infinity();
            for (Index k : pos) min_pos = std::min(min_pos, sim(a, k));
            for (Index k : neg) max_neg = std::max(max_neg, sim(a, k));
            std::erase_if(neg, [&](Index k) { return !(sim(a, k) > min_pos - config.mining_eps); });
            std::erase_if(pos, [&](Index k) { return !(sim(a, k) < max_neg + config.mining_eps); });
        }

        if (!pos.empty()) {
            expo.clear();
            for (Index k : pos) expo.push_back(-config.alpha * (sim(a, k) - config.margin));
            out.value += log1p_sum_exp(expo, weights) / config.alpha;
            for (std::size_t t = 0; t < pos.size(); ++t) {
                const double coeff = -weights[t]; // d term / d S_ak
                out.grad.row(a) += coeff * features.row(pos[t]);
                out.grad.row(pos[t]) += coeff * features.row(a);
            }
        }
        if (!neg.empty()) {
            expo.clear();
            for (Index k : neg) expo.push_back(config.beta * (sim(a, k) - config.margin));
            out.value += log1p_sum_exp(expo, weights) / config.beta;
            for (std::size_t t = 0; t < neg.size(); ++t) {
                const double coeff = weights[t];
                out.grad.row(a) += coeff * features.row(neg[t]);
                out.grad.row(neg[t]) += coeff * features.row(a);
            }
        }
    }
    out.value /= static_cast<double>(n);
    out.grad /= static_cast<double>(n);
    return out;
}

PeerLoss distill_loss(const PeerLogits &student, const PeerLogits &teacher) {
    PeerLoss out;
    for (int k = 0; k < 3; ++k) {
        const Matrix &zs = student[static_cast<std::size_t>(k)];
        const Matrix &zt = teacher[static_cast<std::size_t>(distill_teacher_of(k))];
        if (zs.rows() != zt.rows() || zs.cols() != zt.cols())
            throw std::invalid_argument("distill_loss: student " + std::to_string(k) +
                                        " and its teacher have different shapes");
        const auto batch = static_cast<double>(zs.rows());
        const Matrix pt = softmax_rows(zt);
        const Matrix logps = log_softmax_rows(zs);
        const double term = -(pt.array() * logps.array()).sum() / batch;
        out.terms[static_cast<std::size_t>(k)] = term;
        out.value += term;
        out.grads[static_cast<std::size_t>(k)] = (logps.array().exp().matrix() - pt) / batch;
    }
    return out;
}

BnmLoss bnm_loss(const PeerLogits &student, const PeerLogits &teacher, bool include_teachers) {
    BnmLoss out;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto batch = static_cast<double>(student[k].rows());
        out.predictions[k] = softmax_rows(student[k]);
        const auto s = svd(out.predictions[k]);
        out.student_norms[k] = s.sigma.sum();
        out.value -= out.student_norms[k] / batch;

        Matrix dA = Matrix::Zero(student[k].rows(), student[k].cols());
        const double cutoff = 1e-10 * s.sigma(0);
        for (Index j = 0; j < s.sigma.size(); ++j)
            if (s.sigma(j) > cutoff) dA.noalias() += s.u.col(j) * s.v.col(j).transpose();
        dA *= -1.0 / batch;
        out.grads[k] = softmax_rows_backward(out.predictions[k], dA);

        out.predictions[k + 3] = softmax_rows(teacher[k]);
        if (include_teachers) {
            out.teacher_norms[k] = nuclear_norm(out.predictions[k + 3]);
            out.value -= out.teacher_norms[k] / static_cast<double>(teacher[k].rows());
        }
    }
    return out;
}

LossComponents compute_components(const BatchOutputs &batch, const ObjectiveConfig &config) {
    const Index b = batch.h[0].rows();
    const Index classes = batch.student_logits[0].cols();
    for (std::size_t k = 0; k < 3; ++k) {
        if (batch.h[k].rows() != b || batch.student_logits[k].rows() != b ||
            batch.teacher_logits[k].rows() != b)
            throw std::invalid_argument("compute_components: inconsistent batch sizes");
        if (batch.student_logits[k].cols() != classes || batch.teacher_logits[k].cols() != classes)
            throw std::invalid_argument("compute_components: inconsistent class counts");
    }
    if (static_cast<Index>(batch.labels.size()) != b)
        throw std::invalid_argument("compute_components: one label per image required");

    LossComponents c;
    for (std::size_t k = 0; k < 3; ++k) {
        c.d_id_dz[k] = Matrix::Zero(b, classes);
        c.d_dt_dz[k] = Matrix::Zero(b, classes);
        c.d_bnm_dz[k] = Matrix::Zero(b, classes);
        c.d_ms_dh[k] = Matrix::Zero(b, batch.h[k].cols());
    }

    if (config.mask.id) {
        std::vector<Index> rows;
        std::vector<int> labels;
        for (Index i = 0; i < b; ++i) {
            const int y = batch.labels[static_cast<std::size_t>(i)];
            if (y != kOutlier) {
                rows.push_back(i);
                labels.push_back(y);
            }
        }
        c.id_active = batch.identity_available && classes >= 2 && !rows.empty();
        c.id_degenerate = !c.id_active;
        if (c.id_active) {
            for (std::size_t k = 0; k < 3; ++k) {
                Matrix z(static_cast<Index>(rows.size()), classes);
                for (std::size_t r = 0; r < rows.size(); ++r)
                    z.row(static_cast<Index>(r)) = batch.student_logits[k].row(rows[r]);
                const auto l = id_loss(z, labels, config.smoothing);
                c.id += l.value;
                for (std::size_t r = 0; r < rows.size(); ++r)
                    c.d_id_dz[k].row(rows[r]) = l.grad.row(static_cast<Index>(r));
            }
        }
    }

    if (config.mask.dt) {
        auto d = distill_loss(batch.student_logits, batch.teacher_logits);
        c.dt = d.value;
        c.d_dt_dz = std::move(d.grads);
    }

    // Prediction matrices are reported even when BNM is disabled.
    auto bnm = bnm_loss(batch.student_logits, batch.teacher_logits, config.mask.teacher_bnm);
    c.predictions = std::move(bnm.predictions);
    if (config.mask.bnm) {
        c.bnm = bnm.value;
        c.d_bnm_dz = std::move(bnm.grads);
    }

    if (config.mask.ms) {
        const Index d = batch.h[0].cols();
        std::array<Matrix, 3> unit;
        for (std::size_t k = 0; k < 3; ++k) unit[k] = l2_normalize_rows(batch.h[k]);
        Matrix feats(3 * b, d);
        std::vector<int> image_of(static_cast<std::size_t>(3 * b));
        for (Index i = 0; i < b; ++i)
            for (Index k = 0; k < 3; ++k) {
                feats.row(3 * i + k) = unit[static_cast<std::size_t>(k)].row(i);
                image_of[static_cast<std::size_t>(3 * i + k)] = static_cast<int>(i);
            }
        const auto ms = ms_loss(feats, image_of, batch.labels, config.ms);
        c.ms = ms.value;
        for (std::size_t k = 0; k < 3; ++k) {
            Matrix d_unit(b, d);
            for (Index i = 0; i < b; ++i) d_unit.row(i) = ms.grad.row(3 * i + static_cast<Index>(k));
            c.d_ms_dh[k] = l2_normalize_rows_backward(batch.h[k], d_unit);
        }
    }
    return c;
}

LossReport total_loss(const LossComponents &c, const LossWeights &w) {
    LossReport r;
    r.id = c.id;
    r.dt = c.dt;
    r.bnm = c.bnm;
    r.ms = c.ms;
    r.xi_effective = c.id_degenerate ? 0.0 : w.xi;
    const double xi = r.xi_effective;
    r.total = xi * c.id + (1.0 - xi) * c.dt + w.lambda_bnm * c.bnm + w.eta_ms * c.ms;
    for (std::size_t k = 0; k < 3; ++k) {
        r.dz[k] = xi * c.d_id_dz[k] + (1.0 - xi) * c.d_dt_dz[k] + w.lambda_bnm * c.d_bnm_dz[k];
        r.dh[k] = w.eta_ms * c.d_ms_dh[k];
    }
    r.predictions = c.predictions;
    return r;
}

std::string LossReport::to_json_line() const {
    nlohmann::json j = {{"L_id", id}, {"L_dt", dt}, {"L_bnm", bnm}, {"L_ms", ms},
                        {"total", total}, {"xi_effective", xi_effective}};
    return j.dump();
}

} // namespace sskd
