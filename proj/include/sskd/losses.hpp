#pragma once

// Training objectives with analytic gradients with respect to their
// representation (h) and logit (z) inputs:
//
//   source_ce     cross entropy on labeled source logits
//   ms_loss       multi-similarity metric loss with pair mining
//   id_loss       label-smoothed cross entropy on cluster pseudo labels
//   distill_loss  cyclic teacher -> student soft-label cross entropy
//   bnm_loss      negated, batch-normalized nuclear norm of softmax outputs
//   total_loss    weighted composition of the four adaptation terms

#include "sskd/clustering.hpp"
#include "sskd/numerics.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace sskd {

struct MsConfig {
    double alpha = 2.0;       ///< positive-pair scale
    double beta = 40.0;       ///< negative-pair scale
    double margin = 0.5;      ///< similarity offset
    double mining_eps = 0.1;  ///< pair-mining slack
    bool label_positives = true; ///< views of same-cluster images count as positives

    void validate() const;
};

struct SmoothingConfig {
    double epsilon = 0.1;

    void validate() const;
};

struct LossWeights {
    double xi = 0.5;         ///< identity vs. distillation balance, in (0, 1)
    double lambda_bnm = 1.5; ///< batch nuclear-norm weight
    double eta_ms = 3.0;     ///< multi-similarity weight

    void validate() const;
};

struct LogitLoss {
    double value = 0;
    Matrix grad; ///< dL/dz, same shape as the logits
};

/// Mean over rows of -log softmax(z)[label].
LogitLoss source_ce(const Matrix &z, std::span<const int> labels);

/// Mean over rows of -sum_j q_j log p_j with q = (1 - eps) onehot + eps / C.
/// Requires C >= 2; callers drop outlier rows beforehand.
LogitLoss id_loss(const Matrix &z, std::span<const int> labels, const SmoothingConfig &config);

struct MsLoss {
    double value = 0;
    Matrix grad; ///< dL/dF for the feature rows
};

/// Multi-similarity loss over unit feature rows F (one row per view).
/// `image_of[r]` is the batch image a row came from and `image_labels[i]` the
/// pseudo label of image i (kOutlier allowed). Positives of an anchor are the
/// other views of its image plus, when enabled, views of images with the same
/// non-outlier label; negatives are views of images whose labels differ
/// (outlier images count as singleton classes). Mining keeps negatives with
/// S > min positive S - mining_eps and positives with S < max negative S +
/// mining_eps; when one side is empty the other is kept whole. The value is
/// the mean over anchors of
///   (1/alpha) log(1 + sum_P exp(-alpha (S - margin)))
/// + (1/beta)  log(1 + sum_N exp( beta  (S - margin))).
MsLoss ms_loss(const Matrix &features, std::span<const int> image_of,
               std::span<const int> image_labels, const MsConfig &config);

using PeerLogits = std::array<Matrix, 3>;

struct PeerLoss {
    double value = 0;
    std::array<double, 3> terms{};
    std::array<Matrix, 3> grads; ///< dL/dz for each student
};

/// Index of the teacher that supervises student `k`: 0 <- 2, 1 <- 0, 2 <- 1.
constexpr int distill_teacher_of(int k) { return (k + 2) % 3; }

/// Sum over students of -(1/B) sum_i sum_c p_teacher(c) log p_student(c),
/// with the cyclic teacher assignment above. Teachers receive no gradient.
PeerLoss distill_loss(const PeerLogits &student, const PeerLogits &teacher);

struct BnmLoss {
    double value = 0;
    std::array<double, 3> student_norms{};
    std::array<double, 3> teacher_norms{};
    std::array<Matrix, 3> grads;       ///< dL/dz for each student
    std::array<Matrix, 6> predictions; ///< softmax outputs, students then teachers
};

/// -(1/B) (sum_k |A_k|_* + sum_k |A_k,e|_*) with A = softmax_rows(logits).
/// Gradients flow only into the student logits; teacher terms are value-only
/// and may be left out altogether.
BnmLoss bnm_loss(const PeerLogits &student, const PeerLogits &teacher, bool include_teachers = true);

/// Per-term switches used by ablations. A disabled term contributes neither
/// value nor gradient; the remaining weights are left untouched.
struct TermMask {
    bool id = true;
    bool dt = true;
    bool bnm = true;
    bool ms = true;
    bool teacher_bnm = true;
};

struct ObjectiveConfig {
    LossWeights weights;
    MsConfig ms;
    SmoothingConfig smoothing;
    TermMask mask;
};

/// Everything the objective needs for one mini-batch of B images.
struct BatchOutputs {
    std::array<Matrix, 3> h; ///< raw student representations, view k through peer k
    PeerLogits student_logits;
    PeerLogits teacher_logits;
    std::vector<int> labels; ///< pseudo label per image, kOutlier allowed
    /// False when the current clustering produced fewer than two clusters.
    bool identity_available = true;
};

struct LossComponents {
    double id = 0, dt = 0, bnm = 0, ms = 0;
    bool id_active = false;
    /// Identity learning was requested but had no classes or labeled rows.
    bool id_degenerate = false;
    std::array<Matrix, 3> d_id_dz, d_dt_dz, d_bnm_dz, d_ms_dh;
    std::array<Matrix, 6> predictions;
};

struct LossReport {
    double id = 0, dt = 0, bnm = 0, ms = 0, total = 0;
    double xi_effective = 0; ///< 0 when identity learning is inactive
    std::array<Matrix, 3> dh; ///< dL/dh per peer (raw representation)
    std::array<Matrix, 3> dz; ///< dL/dz per peer
    std::array<Matrix, 6> predictions;

    /// One JSON object on a single line with the scalar values.
    std::string to_json_line() const;
};

/// Evaluates every enabled term on one batch. Identity learning is active
/// when it is available, the heads have at least two classes and the batch
/// holds at least one non-outlier image.
LossComponents compute_components(const BatchOutputs &batch, const ObjectiveConfig &config);

/// total = xi L_id + (1 - xi) L_dt + lambda L_BNM + eta L_MS. When identity
/// learning is degenerate xi is taken as 0 so the distillation term absorbs
/// its weight.
LossReport total_loss(const LossComponents &c, const LossWeights &weights);

inline LossReport evaluate_objective(const BatchOutputs &batch, const ObjectiveConfig &config) {
    return total_loss(compute_components(batch, config), config.weights);
}

} // namespace sskd
