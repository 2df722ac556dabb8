#include "sskd/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace sskd {

namespace {

// Rng stream ids; every stochastic choice in training draws from its own.
constexpr std::uint64_t kPeerInitStream = 0x1000;
constexpr std::uint64_t kSourceShuffleStream = 0x1100;
constexpr std::uint64_t kSourceAugmentStream = 0x1200;
constexpr std::uint64_t kViewStream = 0x2000;
constexpr std::uint64_t kClusterViewStream = 0x2100;
constexpr std::uint64_t kTargetShuffleStream = 0x2200;
constexpr std::uint64_t kHeadStream = 0x2300;

Matrix gather_rows(const Matrix &x, const std::vector<Index> &order, Index begin, Index end) {
    Matrix out(end - begin, x.cols());
    for (Index r = begin; r < end; ++r) out.row(r - begin) = x.row(order[static_cast<std::size_t>(r)]);
    return out;
}

} // namespace

const char *to_string(Ablation a) {
    switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_id: return "no-id";
    case Ablation::no_dt: return "no-dt";
    case Ablation::no_bnm: return "no-bnm";
    case Ablation::no_ms: return "no-ms";
    case Ablation::no_ema: return "no-ema";
    }
    return "?";
}

std::optional<Ablation> parse_ablation(std::string_view name) {
    for (Ablation a : {Ablation::none, Ablation::no_id, Ablation::no_dt, Ablation::no_bnm, Ablation::no_ms,
                       Ablation::no_ema})
        if (name == to_string(a)) return a;
    return std::nullopt;
}

const char *to_string(HeadInit h) { return h == HeadInit::uniform ? "uniform" : "centroid"; }

std::optional<HeadInit> parse_head_init(std::string_view name) {
    for (HeadInit h : {HeadInit::uniform, HeadInit::centroid})
        if (name == to_string(h)) return h;
    return std::nullopt;
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (source_epochs < 1 || adapt_epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (passes_per_epoch < 1) throw std::invalid_argument("TrainConfig: passes_per_epoch must be >= 1");
    if (!(lr > 0 && source_lr > 0)) throw std::invalid_argument("TrainConfig: learning rates must be > 0");
    if (!(weight_decay >= 0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    if (!(rho >= 0 && rho < 1)) throw std::invalid_argument("TrainConfig: rho must lie in [0, 1)");
    if (d_hidden < 1 || d_feat < 1) throw std::invalid_argument("TrainConfig: layer widths must be >= 1");
    if (keep.peer < 0 || keep.peer > 2) throw std::invalid_argument("TrainConfig: keep peer must be 0, 1 or 2");
    weights.validate();
    ms.validate();
    smoothing.validate();
    dbscan.validate();
    for (const auto &v : views) v.validate();
}

ObjectiveConfig TrainConfig::objective() const {
    ObjectiveConfig o{weights, ms, smoothing, TermMask{}};
    switch (ablation) {
    case Ablation::none: break;
    case Ablation::no_id: o.mask.id = false; break;
    case Ablation::no_dt: o.mask.dt = false; break;
    case Ablation::no_bnm: o.mask.bnm = false; break;
    case Ablation::no_ms: o.mask.ms = false; break;
    case Ablation::no_ema: o.mask.teacher_bnm = false; break;
    }
    return o;
}

std::vector<std::pair<Index, Index>> batch_ranges(Index n, int batch_size) {
    std::vector<std::pair<Index, Index>> out;
    for (Index start = 0; start < n; start += batch_size)
        out.emplace_back(start, std::min<Index>(n, start + batch_size));
    if (out.size() > 1 && out.back().second - out.back().first < 2) {
        const Index end = out.back().second;
        out.pop_back();
        out.back().second = end;
    }
    return out;
}

RunState pretrain_source(const Dataset &source, const TrainConfig &config, const TrainHooks &hooks) {
    config.validate();
    if (source.size() == 0) throw std::invalid_argument("pretrain_source: empty source set");
    std::vector<int> labels(static_cast<std::size_t>(source.size()));
    for (Index i = 0; i < source.size(); ++i) {
        const auto &id = source.identities[static_cast<std::size_t>(i)];
        if (!id) throw std::invalid_argument("pretrain_source: unlabeled source sample at row " + std::to_string(i));
        labels[static_cast<std::size_t>(i)] = *id;
    }
    const int classes = std::max(2, *std::max_element(labels.begin(), labels.end()) + 1);
    const ModelShape shape{source.dim(), config.d_hidden, config.d_feat, classes};

    std::array<PeerModel, 3> students;
    std::array<AdamState, 3> optimizers;
    for (int k = 0; k < 3; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        Rng init_rng(config.seed, kPeerInitStream + ku);
        Rng shuffle_rng(config.seed, kSourceShuffleStream + ku);
        Rng aug_rng(config.seed, kSourceAugmentStream + ku);
        students[ku] = init_model(shape, init_rng);
        AdamState opt(students[ku], AdamConfig{config.source_lr, 0.9, 0.999, 1e-8, config.weight_decay});

        std::vector<Index> order(static_cast<std::size_t>(source.size()));
        for (int epoch = 0; epoch < config.source_epochs; ++epoch) {
            const auto decays = std::count_if(config.source_milestones.begin(), config.source_milestones.end(),
                                              [&](int m) { return epoch >= m; });
            opt.config.lr = config.source_lr * std::pow(0.1, static_cast<double>(decays));
            std::iota(order.begin(), order.end(), Index{0});
            shuffle_rng.shuffle(std::span<Index>(order));

            double loss_sum = 0;
            int batches = 0;
            for (const auto &[b0, b1] : batch_ranges(source.size(), config.batch_size)) {
                const Matrix x = augment_batch(gather_rows(source.features, order, b0, b1), config.views[ku], aug_rng);
                std::vector<int> y;
                for (Index r = b0; r < b1; ++r) y.push_back(labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])]);
                const auto fwd = forward(students[ku], x);
                const auto ce = source_ce(fwd.z, y);
                const auto grads = backward(students[ku], fwd.cache, Matrix::Zero(fwd.h.rows(), fwd.h.cols()), ce.grad);
                adam_step(opt, students[ku], grads);
                loss_sum += ce.value;
                ++batches;
            }
            if (hooks.log) {
                nlohmann::json j = {{"stage", "pretrain"}, {"peer", k}, {"epoch", epoch},
                                    {"lr", opt.config.lr}, {"source_ce", loss_sum / batches}};
                *hooks.log << j.dump() << '\n';
            }
        }
        optimizers[ku] = std::move(opt);
    }

    RunState state;
    state.ensemble = PeerEnsemble(std::move(students), config.rho);
    state.optimizers = std::move(optimizers);
    return state;
}

Matrix cluster_features(const PeerEnsemble &ens, const Matrix &x, const std::array<AugmentSpec, 3> &views,
                        std::array<Rng, 3> &rngs) {
    std::array<Matrix, 3> h;
    for (std::size_t j = 0; j < 3; ++j)
        h[j] = l2_normalize_rows(encode(ens.students[j].encoder, augment_batch(x, views[j], rngs[j])));
    return fuse_views(h[0], h[1], h[2]);
}

RunState adapt(const Dataset &target, RunState state, const TrainConfig &config, const TrainHooks &hooks) {
    config.validate();
    if (target.size() == 0) throw std::invalid_argument("adapt: empty target set");
    const Matrix &x = target.features; // identities are never read here
    const Index n = target.size();
    const ObjectiveConfig objective = config.objective();

    auto &ens = state.ensemble;
    ens.rho = config.ablation == Ablation::no_ema ? 0.0 : config.rho;
    for (std::size_t k = 0; k < 3; ++k)
        state.optimizers[k] = AdamState(ens.students[k], AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});

    std::array<Rng, 3> view_rngs = {Rng(config.seed, kViewStream), Rng(config.seed, kViewStream + 1),
                                    Rng(config.seed, kViewStream + 2)};
    std::array<Rng, 3> cluster_rngs = {Rng(config.seed, kClusterViewStream), Rng(config.seed, kClusterViewStream + 1),
                                       Rng(config.seed, kClusterViewStream + 2)};
    Rng shuffle_rng(config.seed, kTargetShuffleStream);
    Rng head_rng(config.seed, kHeadStream);

    std::vector<Index> order(static_cast<std::size_t>(n));
    for (int e = 0; e < config.adapt_epochs; ++e) {
        EpochRecord rec;
        rec.epoch = state.epoch;

        const Matrix fused = cluster_features(ens, x, config.views, cluster_rngs);
        state.labels = assign_pseudo_labels(fused, config.dbscan);
        state.labels.epoch = state.epoch;
        const int m = state.labels.num_clusters;
        rec.num_clusters = m;
        rec.outliers = state.labels.outlier_count();

        const bool identity_available = m >= 2;
        const Index width = ens.students[0].head.classes();
        if (identity_available && (e == 0 || m != width || config.reinit_heads_every_epoch)) {
            for (int k = 0; k < 3; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                if (config.head_init == HeadInit::centroid)
                    set_head(ens, state.optimizers[ku], k,
                             centroid_head(encode(ens.students[ku].encoder, x), state.labels.assignment, m));
                else
                    reinit_head(ens, state.optimizers[ku], k, m, head_rng);
            }
            rec.heads_reset = true;
        }

        double total_sum = 0;
        for (int pass = 0; pass < config.passes_per_epoch; ++pass) {
            std::iota(order.begin(), order.end(), Index{0});
            shuffle_rng.shuffle(std::span<Index>(order));
            for (const auto &[b0, b1] : batch_ranges(n, config.batch_size)) {
                const Matrix xb = gather_rows(x, order, b0, b1);
                BatchOutputs batch;
                batch.identity_available = identity_available;
                for (Index r = b0; r < b1; ++r)
                    batch.labels.push_back(state.labels.assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])]);

                std::array<ForwardCache, 3> caches;
                for (std::size_t j = 0; j < 3; ++j) {
                    const Matrix view = augment_batch(xb, config.views[j], view_rngs[j]);
                    auto fwd = forward(ens.students[j], view);
                    batch.h[j] = std::move(fwd.h);
                    batch.student_logits[j] = std::move(fwd.z);
                    caches[j] = std::move(fwd.cache);
                    batch.teacher_logits[j] = forward(ens.teachers[j], view).z;
                }

                const LossReport report = evaluate_objective(batch, objective);
                for (std::size_t k = 0; k < 3; ++k) {
                    const PeerModel grads = backward(ens.students[k], caches[k], report.dh[k], report.dz[k]);
                    adam_step(state.optimizers[k], ens.students[k], grads);
                }
                ema_update(ens);
                ++state.iteration;
                ++rec.iterations;
                total_sum += report.total;

                if (hooks.log) {
                    nlohmann::json j = nlohmann::json::parse(report.to_json_line());
                    j["stage"] = "adapt";
                    j["epoch"] = state.epoch;
                    j["iteration"] = state.iteration;
                    j["m_t"] = m;
                    *hooks.log << j.dump() << '\n';
                }
                if (hooks.on_iteration) hooks.on_iteration(IterationEvent{state.epoch, state.iteration, m, report, ens});
            }
        }
        rec.mean_total = total_sum / rec.iterations;
        if (hooks.log) {
            nlohmann::json j = {{"stage", "adapt-epoch"}, {"epoch", rec.epoch},    {"m_t", rec.num_clusters},
                                {"outliers", rec.outliers}, {"heads_reset", rec.heads_reset},
                                {"mean_total", rec.mean_total}};
            *hooks.log << j.dump() << '\n';
        }
        if (hooks.on_epoch) hooks.on_epoch(rec, state.labels);
        state.history.push_back(rec);
        ++state.epoch;
    }
    return state;
}

PeerModel keep_final_model(const PeerEnsemble &ens, const KeepSelection &sel) {
    if (sel.peer < 0 || sel.peer > 2) throw std::invalid_argument("keep_final_model: peer must be 0, 1 or 2");
    const auto k = static_cast<std::size_t>(sel.peer);
    return sel.teacher ? ens.teachers[k] : ens.students[k];
}

} // namespace sskd
