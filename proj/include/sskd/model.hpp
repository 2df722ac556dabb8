#pragma once

// Peer encoders (tanh MLP) with a linear class head, the momentum-averaged
// teacher copies, and ADAM with decoupled weight decay.

#include "sskd/numerics.hpp"
#include "sskd/rng.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace sskd {

/// d_in -> d_hidden (tanh) -> d_feat.
struct EncoderParams {
    Matrix w1;    ///< d_hidden x d_in
    RowVector b1; ///< d_hidden
    Matrix w2;    ///< d_feat x d_hidden
    RowVector b2; ///< d_feat

    Index d_in() const { return w1.cols(); }
    Index d_hidden() const { return w1.rows(); }
    Index d_feat() const { return w2.rows(); }
};

/// d_feat -> C class logits.
struct HeadParams {
    Matrix w;    ///< C x d_feat
    RowVector b; ///< C

    Index classes() const { return w.rows(); }
};

struct PeerModel {
    EncoderParams encoder;
    HeadParams head;

    /// Same shapes, every entry zero. Used as a gradient or moment buffer.
    PeerModel zeros_like() const;
};

inline constexpr std::size_t kTensorCount = 6;
inline constexpr std::array<std::string_view, kTensorCount> kTensorNames = {
    "encoder.w1", "encoder.b1", "encoder.w2", "encoder.b2", "head.w", "head.b"};
/// Tensors 4 and 5 belong to the head.
inline constexpr std::size_t kFirstHeadTensor = 4;

using TensorView = Eigen::Map<Vector>;
using ConstTensorView = Eigen::Map<const Vector>;

/// Flattened views of every tensor, in kTensorNames order.
std::array<TensorView, kTensorCount> tensors(PeerModel &m);
std::array<ConstTensorView, kTensorCount> tensors(const PeerModel &m);
std::array<std::pair<Index, Index>, kTensorCount> tensor_shapes(const PeerModel &m);

struct ModelShape {
    Index d_in = 32;
    Index d_hidden = 64;
    Index d_feat = 32;
    Index classes = 2;
};

/// Encoder weights uniform in +-1/sqrt(fan_in), zero biases; head per init_head.
PeerModel init_model(const ModelShape &shape, Rng &rng);
/// Uniform in +-1/sqrt(d_feat), zero bias.
HeadParams init_head(Index d_feat, Index classes, Rng &rng);

struct ForwardCache {
    Matrix x;      ///< B x d_in input
    Matrix hidden; ///< tanh activations, B x d_hidden
    Matrix h;      ///< B x d_feat representation (before normalization)
};

struct ForwardResult {
    Matrix h; ///< B x d_feat
    Matrix z; ///< B x C
    ForwardCache cache;
};

ForwardResult forward(const PeerModel &m, const Matrix &x);
/// Representation only (skips the head).
Matrix encode(const EncoderParams &enc, const Matrix &x);

/// Exact parameter gradients of a scalar loss given dL/dh and dL/dz at the
/// outputs of the forward pass that produced `cache`.
PeerModel backward(const PeerModel &m, const ForwardCache &cache, const Matrix &dh, const Matrix &dz);

/// Three students and their momentum-averaged teachers.
struct PeerEnsemble {
    std::array<PeerModel, 3> students;
    std::array<PeerModel, 3> teachers;
    double rho = 0.999;
    std::int64_t iteration = 0;

    PeerEnsemble() = default;
    /// Teachers start as exact copies of the students.
    PeerEnsemble(std::array<PeerModel, 3> students, double rho);
};

/// teacher <- rho * teacher + (1 - rho) * student for all three peers.
void ema_update(PeerEnsemble &ens);

struct AdamConfig {
    double lr = 0.00035;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0005;
};

struct AdamState {
    AdamConfig config;
    PeerModel m;
    PeerModel v;
    std::array<std::int64_t, kTensorCount> steps{};

    AdamState() = default;
    AdamState(const PeerModel &like, AdamConfig cfg);
};

/// Bias-corrected ADAM with decoupled weight decay:
///   p <- p * (1 - lr * wd);  p <- p - lr * m_hat / (sqrt(v_hat) + eps).
/// Throws std::domain_error naming the tensor on a non-finite gradient.
void adam_step(AdamState &state, PeerModel &params, const PeerModel &grads);

/// Installs `head` on student `peer` and its teacher, resetting the head's
/// ADAM moments and step counts.
void set_head(PeerEnsemble &ens, AdamState &opt, int peer, HeadParams head);

/// Fresh uniform head of width `classes` installed with set_head.
void reinit_head(PeerEnsemble &ens, AdamState &opt, int peer, Index classes, Rng &rng);

/// Nearest-class-mean head over representations `h`: row c of the weights is
/// the mean of the rows labeled c and the bias is -|mean|^2 / 2, so the
/// logits rank classes by Euclidean distance. Negative labels are ignored;
/// every class needs a member.
HeadParams centroid_head(const Matrix &h, std::span<const int> labels, Index classes);

} // namespace sskd
