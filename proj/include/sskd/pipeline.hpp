#pragma once

// End-to-end benchmark runs: data generation, source pretraining, adaptation
// under each ablation, and retrieval evaluation of the kept model.

#include "sskd/config.hpp"
#include "sskd/eval.hpp"
#include "sskd/training.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace sskd {

struct BenchmarkData {
    Dataset source;
    Dataset target; ///< with ground-truth identities, used only for evaluation
    RetrievalProtocol protocol;
};

/// Both domains and the target query/gallery split, all drawn from the
/// configured seed.
BenchmarkData make_benchmark(const PipelineConfig &cfg);

/// Retrieval metrics of `model` on the target protocol.
EvalReport evaluate_on_target(const PeerModel &model, const BenchmarkData &data);

struct AblationRow {
    std::string method; ///< "source-only", "full" or an ablation name
    double mAP = 0;
    double cmc1 = 0;
    int final_clusters = 0;
};

/// Pretrains once, then adapts from the same pretrained state for the full
/// objective and for every requested ablation. Rows: source-only, full, then
/// `ablations` in order.
std::vector<AblationRow> run_ablation_study(const PipelineConfig &cfg, const BenchmarkData &data,
                                            std::span<const Ablation> ablations, std::ostream *log = nullptr);

/// Markdown table with mAP and rank-1 in percent.
std::string format_ablation_table(const std::vector<AblationRow> &rows);

} // namespace sskd
