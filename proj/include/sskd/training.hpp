#pragma once

// Two-stage training: independent source pretraining of three peers, then
// per-epoch clustering and joint optimization of the adaptation objective
// with momentum-averaged teachers.

#include "sskd/clustering.hpp"
#include "sskd/losses.hpp"
#include "sskd/model.hpp"
#include "sskd/synthdata.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sskd {

enum class Ablation { none, no_id, no_dt, no_bnm, no_ms, no_ema };

const char *to_string(Ablation a);
std::optional<Ablation> parse_ablation(std::string_view name);
inline constexpr std::array<Ablation, 5> kAllAblations = {Ablation::no_id, Ablation::no_dt, Ablation::no_bnm,
                                                         Ablation::no_ms, Ablation::no_ema};

/// How a head is re-created after clustering: uniform random weights, or the
/// nearest-class-mean head of each peer's current target representations.
enum class HeadInit { uniform, centroid };

const char *to_string(HeadInit h);
std::optional<HeadInit> parse_head_init(std::string_view name);

/// Which of the six networks is kept for inference.
struct KeepSelection {
    int peer = 0;
    bool teacher = true;
};

struct TrainConfig {
    int batch_size = 64;
    int source_epochs = 20;
    std::vector<int> source_milestones = {10, 17}; ///< epochs at which lr is multiplied by 0.1
    double source_lr = 0.003;
    int adapt_epochs = 15;
    /// Shuffled passes over the target set between two clustering steps.
    int passes_per_epoch = 6;
    double lr = 0.00035;
    double weight_decay = 0.0005;
    double rho = 0.998;
    int d_hidden = 64;
    int d_feat = 32;
    /// Re-create heads after every clustering pass, not only when the cluster
    /// count changes.
    bool reinit_heads_every_epoch = false;
    HeadInit head_init = HeadInit::uniform;
    LossWeights weights;
    MsConfig ms;
    SmoothingConfig smoothing;
    DbscanConfig dbscan{0.07, 5, Metric::cosine};
    std::array<AugmentSpec, 3> views = default_view_specs();
    Ablation ablation = Ablation::none;
    KeepSelection keep;
    std::uint64_t seed = 42;

    void validate() const;
    /// Loss configuration with the ablation's term mask applied.
    ObjectiveConfig objective() const;
};

struct EpochRecord {
    int epoch = 0;
    int num_clusters = 0;
    std::size_t outliers = 0;
    bool heads_reset = false;
    int iterations = 0;
    double mean_total = 0;
};

struct RunState {
    PeerEnsemble ensemble;
    std::array<AdamState, 3> optimizers;
    int epoch = 0;
    std::int64_t iteration = 0;
    PseudoLabeling labels;
    std::vector<EpochRecord> history;
};

struct IterationEvent {
    int epoch;
    std::int64_t iteration;
    int num_clusters;
    const LossReport &report;
    const PeerEnsemble &ensemble;
};

struct TrainHooks {
    std::function<void(const IterationEvent &)> on_iteration;
    std::function<void(const EpochRecord &, const PseudoLabeling &)> on_epoch;
    std::ostream *log = nullptr; ///< JSON-lines sink, one object per iteration/epoch
};

/// Start/end index pairs covering [0, n). Full batches of `batch_size`; a
/// remainder of at least two is its own batch, a single leftover joins the
/// previous batch.
std::vector<std::pair<Index, Index>> batch_ranges(Index n, int batch_size);

/// Trains the three peers independently on source cross entropy, each with its
/// own initialization, shuffling and augmentation stream. Teachers are set
/// equal to the students at the end.
RunState pretrain_source(const Dataset &source, const TrainConfig &config, const TrainHooks &hooks = {});

/// Adaptation stage. Identities in `target` are ignored.
RunState adapt(const Dataset &target, RunState state, const TrainConfig &config,
               const TrainHooks &hooks = {});

PeerModel keep_final_model(const PeerEnsemble &ens, const KeepSelection &sel = {});

/// Fused, unit-norm target features of the current students (one augmented
/// view per peer), the input of each clustering pass.
Matrix cluster_features(const PeerEnsemble &ens, const Matrix &x, const std::array<AugmentSpec, 3> &views,
                        std::array<Rng, 3> &rngs);

} // namespace sskd
