#include "sskd/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

namespace sskd {

RetrievalProtocol split_query_gallery(const Dataset &data, std::uint64_t seed) {
    RetrievalProtocol p;
    const auto n = static_cast<std::size_t>(data.size());
    p.identities.resize(n);
    p.cameras = data.cameras;
    // (identity, camera) -> rows, in row order
    std::map<std::pair<int, int>, std::vector<Index>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        if (!data.identities[i]) throw std::invalid_argument("split_query_gallery: row " + std::to_string(i) + " has no identity");
        p.identities[i] = *data.identities[i];
        groups[{p.identities[i], p.cameras[i]}].push_back(static_cast<Index>(i));
    }
    Rng rng(seed, 0x3000);
    std::vector<bool> is_query(n, false);
    for (const auto &[key, rows] : groups)
        is_query[static_cast<std::size_t>(rows[static_cast<std::size_t>(rng.below(rows.size()))])] = true;
    for (std::size_t i = 0; i < n; ++i) (is_query[i] ? p.query : p.gallery).push_back(static_cast<Index>(i));
    return p;
}

Matrix extract_features(const PeerModel &model, const Matrix &x) {
    return l2_normalize_rows(encode(model.encoder, x));
}

EvalReport evaluate(const RetrievalProtocol &protocol, const Matrix &features) {
    if (protocol.query.empty() || protocol.gallery.empty())
        throw std::invalid_argument("evaluate: query and gallery must be non-empty");
    if (static_cast<Index>(protocol.identities.size()) != features.rows() ||
        protocol.cameras.size() != protocol.identities.size())
        throw std::invalid_argument("evaluate: ground truth not aligned with features");

    EvalReport rep;
    const std::size_t max_rank = protocol.gallery.size();
    std::vector<double> first_hit_counts(max_rank, 0.0);

    std::vector<std::pair<double, std::size_t>> ranked;
    for (Index q : protocol.query) {
        const auto qu = static_cast<std::size_t>(q);
        ranked.clear();
        for (std::size_t g = 0; g < protocol.gallery.size(); ++g) {
            const auto gi = static_cast<std::size_t>(protocol.gallery[g]);
            if (protocol.identities[gi] == protocol.identities[qu] && protocol.cameras[gi] == protocol.cameras[qu])
                continue;
            ranked.emplace_back(1.0 - features.row(q).dot(features.row(protocol.gallery[g])), g);
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto &a, const auto &b) { return a.first < b.first; });

        double hits = 0, precision_sum = 0;
        std::size_t first_hit = 0;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            const auto gi = static_cast<std::size_t>(protocol.gallery[ranked[r].second]);
            if (protocol.identities[gi] != protocol.identities[qu]) continue;
            hits += 1;
            precision_sum += hits / static_cast<double>(r + 1);
            if (hits == 1) first_hit = r;
        }
        if (hits == 0) {
            ++rep.skipped;
            continue;
        }
        rep.ap.push_back(precision_sum / hits);
        rep.evaluated.push_back(q);
        first_hit_counts[first_hit] += 1;
    }

    if (!rep.ap.empty()) {
        const auto nq = static_cast<double>(rep.ap.size());
        rep.mAP = std::accumulate(rep.ap.begin(), rep.ap.end(), 0.0) / nq;
        rep.cmc.resize(max_rank);
        double running = 0;
        for (std::size_t r = 0; r < max_rank; ++r) {
            running += first_hit_counts[r];
            rep.cmc[r] = running / nq;
        }
        const auto at = [&](std::size_t k) { return rep.cmc[std::min(k, max_rank) - 1]; };
        rep.cmc1 = at(1);
        rep.cmc5 = at(5);
        rep.cmc10 = at(10);
    }
    return rep;
}

std::string EvalReport::to_json(bool with_timestamp) const {
    nlohmann::json j = {{"mAP", mAP},
                        {"cmc", {{"top1", cmc1}, {"top5", cmc5}, {"top10", cmc10}}},
                        {"queries_evaluated", ap.size()},
                        {"queries_skipped", skipped}};
    if (with_timestamp) {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        j["created_at_unix"] = std::chrono::duration_cast<std::chrono::seconds>(now).count();
    }
    return j.dump(2);
}

void write_ap_csv(const std::string &path, const EvalReport &report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "query_index,ap\n";
    char buf[64];
    for (std::size_t i = 0; i < report.ap.size(); ++i) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, report.ap[i]);
        out << report.evaluated[i] << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\n';
    }
}

} // namespace sskd
