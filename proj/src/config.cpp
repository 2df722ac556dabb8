#include "sskd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace sskd {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_scalar(const std::string &key, const std::string &v) {
    T out{};
    const char *end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end || v.empty())
        throw ConfigError(key, "config key '" + key + "': cannot parse value '" + v + "'");
    return out;
}

bool parse_bool(const std::string &key, const std::string &v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key, "config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

struct KeyEntry {
    std::string name;
    std::function<void(PipelineConfig &, const std::string &, const std::string &)> set;
    std::function<std::string(const PipelineConfig &)> get;
};

#define SSKD_DOUBLE_KEY(NAME, FIELD)                                                              \
    KeyEntry{NAME, [](PipelineConfig &c, const std::string &k, const std::string &v) {            \
                 c.FIELD = parse_scalar<double>(k, v);                                             \
             },                                                                                    \
             [](const PipelineConfig &c) { return fmt(c.FIELD); }}
#define SSKD_INT_KEY(NAME, FIELD)                                                                 \
    KeyEntry{NAME, [](PipelineConfig &c, const std::string &k, const std::string &v) {            \
                 c.FIELD = parse_scalar<int>(k, v);                                                \
             },                                                                                    \
             [](const PipelineConfig &c) { return std::to_string(c.FIELD); }}
#define SSKD_BOOL_KEY(NAME, FIELD)                                                                \
    KeyEntry{NAME, [](PipelineConfig &c, const std::string &k, const std::string &v) {            \
                 c.FIELD = parse_bool(k, v);                                                       \
             },                                                                                    \
             [](const PipelineConfig &c) { return std::string(c.FIELD ? "true" : "false"); }}

void add_domain_keys(std::vector<KeyEntry> &keys, const std::string &prefix, DomainSpec BenchmarkSpec::*member) {
    const auto dom = [member](PipelineConfig &c) -> DomainSpec & { return c.bench.*member; };
    const auto cdom = [member](const PipelineConfig &c) -> const DomainSpec & { return c.bench.*member; };
    const auto int_key = [&](const char *name, int DomainSpec::*f) {
        keys.push_back({prefix + name,
                        [dom, f](PipelineConfig &c, const std::string &k, const std::string &v) {
                            dom(c).*f = parse_scalar<int>(k, v);
                        },
                        [cdom, f](const PipelineConfig &c) { return std::to_string(cdom(c).*f); }});
    };
    const auto dbl_key = [&](const char *name, double DomainSpec::*f) {
        keys.push_back({prefix + name,
                        [dom, f](PipelineConfig &c, const std::string &k, const std::string &v) {
                            dom(c).*f = parse_scalar<double>(k, v);
                        },
                        [cdom, f](const PipelineConfig &c) { return fmt(cdom(c).*f); }});
    };
    int_key("n_identities", &DomainSpec::n_identities);
    int_key("samples_per_identity", &DomainSpec::samples_per_identity);
    int_key("n_cameras", &DomainSpec::n_cameras);
    int_key("d_in", &DomainSpec::d_in);
    int_key("identity_rank", &DomainSpec::identity_rank);
    dbl_key("identity_sigma", &DomainSpec::identity_sigma);
    dbl_key("intra_class_sigma", &DomainSpec::intra_class_sigma);
    dbl_key("camera_shift_sigma", &DomainSpec::camera_shift_sigma);
    dbl_key("rotation_angle", &DomainSpec::domain_rotation_angle);
    dbl_key("offset_sigma", &DomainSpec::domain_offset_sigma);
}

void add_view_keys(std::vector<KeyEntry> &keys, std::size_t j) {
    const std::string prefix = "view" + std::to_string(j) + "_";
    const auto dbl_key = [&](const char *name, double AugmentSpec::*f) {
        keys.push_back({prefix + name,
                        [j, f](PipelineConfig &c, const std::string &k, const std::string &v) {
                            c.train.views[j].*f = parse_scalar<double>(k, v);
                        },
                        [j, f](const PipelineConfig &c) { return fmt(c.train.views[j].*f); }});
    };
    dbl_key("jitter", &AugmentSpec::jitter_sigma);
    dbl_key("mask", &AugmentSpec::mask_fraction);
    dbl_key("scale_lo", &AugmentSpec::scale_lo);
    dbl_key("scale_hi", &AugmentSpec::scale_hi);
}

const std::vector<KeyEntry> &registry() {
    static const std::vector<KeyEntry> keys = [] {
        std::vector<KeyEntry> k = {
            SSKD_INT_KEY("batch_size", train.batch_size),
            SSKD_INT_KEY("source_epochs", train.source_epochs),
            KeyEntry{"source_milestones",
                     [](PipelineConfig &c, const std::string &key, const std::string &v) {
                         c.train.source_milestones.clear();
                         std::stringstream ss(v);
                         std::string item;
                         while (std::getline(ss, item, ','))
                             if (!trim(item).empty()) c.train.source_milestones.push_back(parse_scalar<int>(key, trim(item)));
                     },
                     [](const PipelineConfig &c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.train.source_milestones.size(); ++i)
                             s += (i ? "," : "") + std::to_string(c.train.source_milestones[i]);
                         return s;
                     }},
            SSKD_DOUBLE_KEY("source_lr", train.source_lr),
            SSKD_INT_KEY("adapt_epochs", train.adapt_epochs),
            SSKD_INT_KEY("passes_per_epoch", train.passes_per_epoch),
            SSKD_DOUBLE_KEY("lr", train.lr),
            SSKD_DOUBLE_KEY("weight_decay", train.weight_decay),
            SSKD_DOUBLE_KEY("rho", train.rho),
            SSKD_INT_KEY("d_hidden", train.d_hidden),
            SSKD_INT_KEY("d_feat", train.d_feat),
            SSKD_BOOL_KEY("reinit_heads_every_epoch", train.reinit_heads_every_epoch),
            KeyEntry{"head_init",
                     [](PipelineConfig &c, const std::string &key, const std::string &v) {
                         const auto h = parse_head_init(v);
                         if (!h) throw ConfigError(key, "config key '" + key + "': expected uniform or centroid");
                         c.train.head_init = *h;
                     },
                     [](const PipelineConfig &c) { return std::string(to_string(c.train.head_init)); }},
            SSKD_DOUBLE_KEY("xi", train.weights.xi),
            SSKD_DOUBLE_KEY("lambda_bnm", train.weights.lambda_bnm),
            SSKD_DOUBLE_KEY("eta_ms", train.weights.eta_ms),
            SSKD_DOUBLE_KEY("ms_alpha", train.ms.alpha),
            SSKD_DOUBLE_KEY("ms_beta", train.ms.beta),
            SSKD_DOUBLE_KEY("ms_margin", train.ms.margin),
            SSKD_DOUBLE_KEY("ms_mining_eps", train.ms.mining_eps),
            SSKD_BOOL_KEY("ms_label_positives", train.ms.label_positives),
            SSKD_DOUBLE_KEY("smoothing_epsilon", train.smoothing.epsilon),
            SSKD_DOUBLE_KEY("dbscan_eps", train.dbscan.eps),
            SSKD_INT_KEY("dbscan_min_pts", train.dbscan.min_pts),
            KeyEntry{"dbscan_metric",
                     [](PipelineConfig &c, const std::string &key, const std::string &v) {
                         if (v == "cosine")
                             c.train.dbscan.metric = Metric::cosine;
                         else if (v == "euclidean")
                             c.train.dbscan.metric = Metric::euclidean;
                         else
                             throw ConfigError(key, "config key '" + key + "': expected cosine or euclidean");
                     },
                     [](const PipelineConfig &c) {
                         return std::string(c.train.dbscan.metric == Metric::cosine ? "cosine" : "euclidean");
                     }},
            KeyEntry{"ablation",
                     [](PipelineConfig &c, const std::string &key, const std::string &v) {
                         const auto a = parse_ablation(v);
                         if (!a) throw ConfigError(key, "config key '" + key + "': unknown ablation '" + v + "'");
                         c.train.ablation = *a;
                     },
                     [](const PipelineConfig &c) { return std::string(to_string(c.train.ablation)); }},
            SSKD_INT_KEY("keep_peer", train.keep.peer),
            SSKD_BOOL_KEY("keep_teacher", train.keep.teacher),
            KeyEntry{"seed",
                     [](PipelineConfig &c, const std::string &key, const std::string &v) {
                         c.train.seed = parse_scalar<std::uint64_t>(key, v);
                     },
                     [](const PipelineConfig &c) { return std::to_string(c.train.seed); }},
        };
        for (std::size_t j = 0; j < 3; ++j) add_view_keys(k, j);
        add_domain_keys(k, "source_", &BenchmarkSpec::source);
        add_domain_keys(k, "target_", &BenchmarkSpec::target);
        return k;
    }();
    return keys;
}

#undef SSKD_DOUBLE_KEY
#undef SSKD_INT_KEY
#undef SSKD_BOOL_KEY

const KeyEntry &find_key(const std::string &key) {
    for (const auto &e : registry())
        if (e.name == key) return e;
    throw ConfigError(key, "unknown config key '" + key + "'");
}

} // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto &e : registry()) out.push_back(e.name);
    return out;
}

void set_config_value(PipelineConfig &cfg, const std::string &key, const std::string &value) {
    find_key(key).set(cfg, key, value);
}

std::string get_config_value(const PipelineConfig &cfg, const std::string &key) { return find_key(key).get(cfg); }

PipelineConfig parse_config(std::istream &in) {
    PipelineConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(t, "config line " + std::to_string(lineno) + ": expected key = value");
        set_config_value(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    try {
        cfg.train.validate();
        cfg.bench.source.validate();
        cfg.bench.target.validate();
    } catch (const std::invalid_argument &e) {
        throw ConfigError("", e.what());
    }
    return cfg;
}

PipelineConfig load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    return parse_config(in);
}

std::string format_config(const PipelineConfig &cfg) {
    std::string out;
    for (const auto &e : registry()) out += e.name + " = " + e.get(cfg) + "\n";
    return out;
}

} // namespace sskd
