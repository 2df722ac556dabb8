#include "sskd/pipeline.hpp"

#include <cstdio>

namespace sskd {

BenchmarkData make_benchmark(const PipelineConfig &cfg) {
    BenchmarkData d;
    d.source = generate_domain(cfg.bench.source, cfg.train.seed, Domain::source);
    d.target = generate_domain(cfg.bench.target, cfg.train.seed, Domain::target);
    d.protocol = split_query_gallery(d.target, cfg.train.seed);
    return d;
}

EvalReport evaluate_on_target(const PeerModel &model, const BenchmarkData &data) {
    return evaluate(data.protocol, extract_features(model, data.target.features));
}

std::vector<AblationRow> run_ablation_study(const PipelineConfig &cfg, const BenchmarkData &data,
                                            std::span<const Ablation> ablations, std::ostream *log) {
    TrainHooks hooks;
    hooks.log = log;
    const RunState pretrained = pretrain_source(data.source, cfg.train, hooks);
    const Dataset unlabeled = data.target.without_identities();

    std::vector<AblationRow> rows;
    const auto base = evaluate_on_target(keep_final_model(pretrained.ensemble, cfg.train.keep), data);
    rows.push_back({"source-only", base.mAP, base.cmc1, 0});

    std::vector<Ablation> modes = {Ablation::none};
    modes.insert(modes.end(), ablations.begin(), ablations.end());
    for (Ablation a : modes) {
        TrainConfig tc = cfg.train;
        tc.ablation = a;
        const RunState adapted = adapt(unlabeled, pretrained, tc, hooks);
        const auto rep = evaluate_on_target(keep_final_model(adapted.ensemble, tc.keep), data);
        rows.push_back({a == Ablation::none ? "full" : to_string(a), rep.mAP, rep.cmc1,
                        adapted.history.empty() ? 0 : adapted.history.back().num_clusters});
    }
    return rows;
}

std::string format_ablation_table(const std::vector<AblationRow> &rows) {
    std::string out = "| method | mAP | top-1 | clusters |\n|---|---|---|---|\n";
    char buf[160];
    for (const auto &r : rows) {
        std::snprintf(buf, sizeof buf, "| %s | %.1f | %.1f | %d |\n", r.method.c_str(), 100 * r.mAP, 100 * r.cmc1,
                      r.final_clusters);
        out += buf;
    }
    return out;
}

} // namespace sskd
