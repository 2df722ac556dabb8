#include "sskd/clustering.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <stdexcept>

namespace sskd {

void DbscanConfig::validate() const {
    if (!(eps > 0)) throw std::invalid_argument("DbscanConfig: eps must be > 0");
    if (min_pts < 2) throw std::invalid_argument("DbscanConfig: min_pts must be >= 2");
}

std::size_t PseudoLabeling::outlier_count() const {
    return static_cast<std::size_t>(std::count(assignment.begin(), assignment.end(), kOutlier));
}

Matrix fuse_views(const Matrix &h1, const Matrix &h2, const Matrix &h3) {
    if (h1.rows() != h2.rows() || h1.rows() != h3.rows() || h1.cols() != h2.cols() ||
        h1.cols() != h3.cols())
        throw std::invalid_argument("fuse_views: view feature shapes differ");
    return l2_normalize_rows(((h1 + h2 + h3) / 3.0).eval());
}

double point_distance(const Matrix &points, Index i, Index j, Metric metric) {
    if (metric == Metric::cosine) return 1.0 - points.row(i).dot(points.row(j));
    return (points.row(i) - points.row(j)).norm();
}

namespace {

std::vector<std::vector<Index>> neighborhoods(const Matrix &points, const DbscanConfig &config) {
    const Index n = points.rows();
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
    Matrix gram;
    if (config.metric == Metric::cosine) gram = points * points.transpose();
    for (Index i = 0; i < n; ++i) {
        auto &nb = out[static_cast<std::size_t>(i)];
        for (Index j = 0; j < n; ++j) {
            const double dist = config.metric == Metric::cosine
                                    ? 1.0 - gram(i, j)
                                    : (points.row(i) - points.row(j)).norm();
            if (dist <= config.eps) nb.push_back(j);
        }
    }
    return out;
}

} // namespace

std::vector<int> dbscan(const Matrix &points, const DbscanConfig &config) {
    config.validate();
    require_finite(points, "dbscan");
    constexpr int unvisited = -2;
    const auto n = static_cast<std::size_t>(points.rows());
    const auto nb = neighborhoods(points, config);
    const auto is_core = [&](std::size_t i) {
        return nb[i].size() >= static_cast<std::size_t>(config.min_pts);
    };

    std::vector<int> labels(n, unvisited);
    int next_cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != unvisited) continue;
        if (!is_core(i)) {
            labels[i] = kOutlier;
            continue;
        }
        const int c = next_cluster++;
        labels[i] = c;
        std::deque<Index> queue(nb[i].begin(), nb[i].end());
        while (!queue.empty()) {
            const auto j = static_cast<std::size_t>(queue.front());
            queue.pop_front();
            if (labels[j] == kOutlier) {
                labels[j] = c; // border point
                continue;
            }
            if (labels[j] != unvisited) continue;
            labels[j] = c;
            if (is_core(j)) queue.insert(queue.end(), nb[j].begin(), nb[j].end());
        }
    }
    return labels;
}

PseudoLabeling assign_pseudo_labels(const Matrix &fused, const DbscanConfig &config) {
    const auto raw = dbscan(fused, config);
    PseudoLabeling out;
    out.assignment.resize(raw.size(), kOutlier);
    std::vector<int> remap;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == kOutlier) continue;
        const auto c = static_cast<std::size_t>(raw[i]);
        if (c >= remap.size()) remap.resize(c + 1, -1);
        if (remap[c] < 0) remap[c] = out.num_clusters++;
        out.assignment[i] = remap[c];
    }
    return out;
}

void write_pseudo_labels_csv(const std::string &path, const PseudoLabeling &labels) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "image_index,label\n";
    for (std::size_t i = 0; i < labels.assignment.size(); ++i)
        out << i << ',' << labels.assignment[i] << '\n';
}

} // namespace sskd
