#pragma once

// View fusion, DBSCAN and pseudo-label assignment over target features.

#include "sskd/numerics.hpp"

#include <string>
#include <vector>

namespace sskd {

inline constexpr int kOutlier = -1;

enum class Metric { cosine, euclidean };

struct DbscanConfig {
    double eps = 0.45;
    int min_pts = 4;
    Metric metric = Metric::cosine;

    void validate() const;
};

struct PseudoLabeling {
    std::vector<int> assignment; ///< per image: 0..num_clusters-1 or kOutlier
    int num_clusters = 0;
    int epoch = 0;

    std::size_t outlier_count() const;
};

/// Row-wise mean of three equally shaped view-feature blocks, each row then
/// scaled to unit length.
Matrix fuse_views(const Matrix &h1, const Matrix &h2, const Matrix &h3);

/// Distance between rows i and j of `points` under `metric`. Cosine distance
/// is 1 - <p_i, p_j> and assumes unit-norm rows.
double point_distance(const Matrix &points, Index i, Index j, Metric metric);

/// Density clustering. Points are scanned in ascending index order and
/// neighbors are expanded in ascending order, so a border point reachable from
/// two clusters joins the one expanded first. Labels are 0, 1, ... in
/// order of cluster creation; unreachable points are kOutlier.
std::vector<int> dbscan(const Matrix &points, const DbscanConfig &config);

/// dbscan() with clusters renumbered by first appearance in image order.
PseudoLabeling assign_pseudo_labels(const Matrix &fused, const DbscanConfig &config);

/// `image_index,label` rows, outliers written as -1.
void write_pseudo_labels_csv(const std::string &path, const PseudoLabeling &labels);

} // namespace sskd
