// Command-line driver: gen-data, pretrain, adapt, eval, gradcheck, ablate.
// Every output lands under --out. Failures print one JSON line on stderr:
//   {"error":"<message>","key":"<config key or flag>"}

#include "sskd/checkpoint.hpp"
#include "sskd/config.hpp"
#include "sskd/gradcheck.hpp"
#include "sskd/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace sskd;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::string ablation;
    std::string data_dir;
    std::string checkpoint;
    bool untrained = false;
};

struct CliError : std::runtime_error {
    CliError(std::string k, const std::string &msg) : std::runtime_error(msg), key(std::move(k)) {}
    std::string key;
};

PipelineConfig resolve_config(const Options &o) {
    PipelineConfig cfg = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
    if (o.seed) cfg.train.seed = *o.seed;
    if (!o.ablation.empty()) set_config_value(cfg, "ablation", o.ablation);
    return cfg;
}

fs::path out_dir(const Options &o) {
    fs::create_directories(o.out);
    return fs::path(o.out);
}

fs::path data_dir(const Options &o) { return o.data_dir.empty() ? fs::path(o.out) : fs::path(o.data_dir); }

std::ofstream open_out(const fs::path &p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
}

void cmd_gen_data(const Options &o) {
    const auto cfg = resolve_config(o);
    const auto dir = out_dir(o);
    const auto data = make_benchmark(cfg);
    save_embeddings((dir / "source.csv").string(), data.source);
    save_embeddings((dir / "target.csv").string(), data.target);
    std::cout << "wrote " << data.source.size() << " source and " << data.target.size() << " target samples to "
              << dir.string() << '\n';
}

void cmd_pretrain(const Options &o) {
    const auto cfg = resolve_config(o);
    const auto dir = out_dir(o);
    const auto source = load_embeddings((data_dir(o) / "source.csv").string(), Domain::source);
    auto log = open_out(dir / "pretrain_log.jsonl");
    const auto state = pretrain_source(source, cfg.train, TrainHooks{{}, {}, &log});
    write_checkpoint((dir / "pretrain.ckpt").string(), state.ensemble);
    std::cout << "wrote " << (dir / "pretrain.ckpt").string() << '\n';
}

void cmd_adapt(const Options &o) {
    const auto cfg = resolve_config(o);
    const auto dir = out_dir(o);
    const auto target = load_embeddings((data_dir(o) / "target.csv").string(), Domain::target).without_identities();
    const fs::path ckpt = o.checkpoint.empty() ? dir / "pretrain.ckpt" : fs::path(o.checkpoint);
    RunState state;
    state.ensemble = read_checkpoint(ckpt.string());
    auto log = open_out(dir / "adapt_log.jsonl");
    state = adapt(target, std::move(state), cfg.train, TrainHooks{{}, {}, &log});
    write_checkpoint((dir / "adapt.ckpt").string(), state.ensemble);
    write_pseudo_labels_csv((dir / "pseudo_labels.csv").string(), state.labels);
    std::cout << "wrote " << (dir / "adapt.ckpt").string() << " (" << state.labels.num_clusters
              << " clusters in the last epoch)\n";
}

void cmd_eval(const Options &o) {
    const auto cfg = resolve_config(o);
    const auto dir = out_dir(o);
    BenchmarkData data;
    data.target = load_embeddings((data_dir(o) / "target.csv").string(), Domain::target);
    data.protocol = split_query_gallery(data.target, cfg.train.seed);
    PeerModel model;
    if (o.untrained) {
        Rng rng(cfg.train.seed, 0x1000);
        model = init_model(ModelShape{data.target.dim(), cfg.train.d_hidden, cfg.train.d_feat, 2}, rng);
    } else {
        const fs::path ckpt = o.checkpoint.empty() ? dir / "adapt.ckpt" : fs::path(o.checkpoint);
        model = keep_final_model(read_checkpoint(ckpt.string()), cfg.train.keep);
    }
    if (model.encoder.w1.cols() != data.target.dim())
        throw CliError("d_in", "model input width does not match the target data");
    const auto rep = evaluate_on_target(model, data);
    open_out(dir / "eval.json") << rep.to_json(true) << '\n';
    write_ap_csv((dir / "eval_ap.csv").string(), rep);
    std::cout << rep.to_json(false) << '\n';
}

int cmd_gradcheck(const Options &o) {
    const auto cfg = resolve_config(o);
    const auto results = run_gradcheck_suite(cfg.train.seed);
    bool ok = true;
    std::printf("%-16s %9s %12s %10s %s\n", "loss", "instances", "max_rel_err", "tolerance", "status");
    for (const auto &r : results) {
        std::printf("%-16s %9d %12.3e %10.0e %s\n", r.loss.c_str(), r.instances, r.max_rel_error, r.tolerance,
                    r.passed ? "ok" : "FAIL");
        ok = ok && r.passed;
    }
    if (!ok) throw CliError("gradcheck", "gradient check failed");
    return 0;
}

void cmd_ablate(const Options &o) {
    const auto cfg = resolve_config(o);
    const auto dir = out_dir(o);
    const auto data = make_benchmark(cfg);
    auto log = open_out(dir / "ablate_log.jsonl");
    std::vector<Ablation> modes(kAllAblations.begin(), kAllAblations.end());
    if (!o.ablation.empty()) modes = {cfg.train.ablation};
    PipelineConfig base = cfg;
    base.train.ablation = Ablation::none;
    const auto rows = run_ablation_study(base, data, modes, &log);
    const std::string table = format_ablation_table(rows);
    open_out(dir / "ablation.md") << table;
    nlohmann::json j = nlohmann::json::array();
    for (const auto &r : rows)
        j.push_back({{"method", r.method}, {"mAP", r.mAP}, {"top1", r.cmc1}, {"clusters", r.final_clusters}});
    open_out(dir / "ablation.json") << j.dump(2) << '\n';
    std::cout << table;
}

void fail(const std::string &message, const std::string &key) {
    nlohmann::json j = {{"error", message}, {"key", key}};
    std::cerr << j.dump() << '\n';
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Peer self-distillation domain adaptation for re-identification embeddings"};
    app.require_subcommand(1);
    Options o;

    const auto common = [&](CLI::App *sub) {
        sub->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override the configured seed");
        sub->add_option("--out", o.out, "output directory");
    };
    auto *gen = app.add_subcommand("gen-data", "write source.csv and target.csv");
    auto *pre = app.add_subcommand("pretrain", "train the three peers on the source domain");
    auto *ad = app.add_subcommand("adapt", "adapt a pretrained ensemble to the target domain");
    auto *ev = app.add_subcommand("eval", "retrieval metrics on the target domain");
    auto *gc = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
    auto *ab = app.add_subcommand("ablate", "compare the full objective with each ablation");
    for (auto *s : {gen, pre, ad, ev, gc, ab}) common(s);
    for (auto *s : {pre, ad, ev}) s->add_option("--data", o.data_dir, "directory holding the CSV files (default --out)");
    for (auto *s : {ad, ev}) s->add_option("--checkpoint", o.checkpoint, "input checkpoint");
    for (auto *s : {ad, ab}) s->add_option("--ablation", o.ablation, "none, no-id, no-dt, no-bnm, no-ms or no-ema");
    ev->add_flag("--untrained", o.untrained, "evaluate a freshly initialized encoder");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        fail(e.what(), "argv");
        return 2;
    }

    try {
        if (*gen) cmd_gen_data(o);
        else if (*pre) cmd_pretrain(o);
        else if (*ad) cmd_adapt(o);
        else if (*ev) cmd_eval(o);
        else if (*gc) cmd_gradcheck(o);
        else if (*ab) cmd_ablate(o);
    } catch (const ConfigError &e) {
        fail(e.what(), e.key());
        return 1;
    } catch (const CliError &e) {
        fail(e.what(), e.key);
        return 1;
    } catch (const std::exception &e) {
        fail(e.what(), "");
        return 1;
    }
    return 0;
}
