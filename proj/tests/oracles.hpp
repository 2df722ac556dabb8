#pragma once

// Reference implementations used only by the tests. Each one is written from
// the definition with plain loops and shares no code with the library.

#include "sskd/numerics.hpp"
#include "sskd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

using sskd::Index;
using sskd::Matrix;

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// ascending.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
    const Index n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0, total = 0;
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) {
                total += a(i, j) * a(i, j);
                if (i != j) off += a(i, j) * a(i, j);
            }
        if (off <= 1e-30 * total || off == 0) break;
        for (Index p = 0; p + 1 < n; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1);
                const double s = t * c;
                for (Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

/// Singular values as square roots of the eigenvalues of A^T A (or A A^T),
/// descending.
inline std::vector<double> singular_values_gram(const Matrix &a) {
    const Matrix g = a.rows() >= a.cols() ? Matrix(a.transpose() * a) : Matrix(a * a.transpose());
    auto ev = symmetric_eigenvalues(g);
    std::vector<double> s;
    for (auto it = ev.rbegin(); it != ev.rend(); ++it) s.push_back(std::sqrt(std::max(0.0, *it)));
    return s;
}

/// Singular values from the eigenvalues of [[0, A], [A^T, 0]], which are
/// +-sigma_i plus zeros. Avoids squaring, so small sigma keep full accuracy.
inline std::vector<double> singular_values_augmented(const Matrix &a) {
    const Index m = a.rows(), n = a.cols();
    Matrix big = Matrix::Zero(m + n, m + n);
    big.topRightCorner(m, n) = a;
    big.bottomLeftCorner(n, m) = a.transpose();
    auto ev = symmetric_eigenvalues(big);
    std::vector<double> s(ev.rbegin(), ev.rbegin() + std::min(m, n));
    for (double &x : s) x = std::max(0.0, x);
    return s;
}

inline double nuclear_norm(const Matrix &a) {
    const auto s = singular_values_augmented(a);
    return std::accumulate(s.begin(), s.end(), 0.0);
}

using Partition = std::set<std::set<int>>;

inline Partition to_partition(const std::vector<int> &labels) {
    std::map<int, std::set<int>> groups;
    std::set<int> outliers;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0)
            outliers.insert(static_cast<int>(i));
        else
            groups[labels[i]].insert(static_cast<int>(i));
    }
    Partition p;
    for (auto &[k, g] : groups) p.insert(g);
    // outliers form one marked block so they are compared as well
    if (!outliers.empty()) {
        std::set<int> marked;
        for (int i : outliers) marked.insert(-1 - i);
        p.insert(marked);
    }
    return p;
}

/// DBSCAN from its definition: full distance matrix, core points with at
/// least min_pts neighbors within eps (self included), connected components
/// of the core graph, and each border point attached to the adjacent
/// component whose lowest core index is smallest. Returns -1 for outliers.
inline std::vector<int> dbscan(const Matrix &pts, double eps, int min_pts, bool cosine) {
    const auto n = static_cast<std::size_t>(pts.rows());
    std::vector<std::vector<double>> dist(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0;
            for (Index d = 0; d < pts.cols(); ++d) {
                const double a = pts(static_cast<Index>(i), d), b = pts(static_cast<Index>(j), d);
                acc += cosine ? a * b : (a - b) * (a - b);
            }
            dist[i][j] = cosine ? 1 - acc : std::sqrt(acc);
        }
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) {
        int count = 0;
        for (std::size_t j = 0; j < n; ++j) count += dist[i][j] <= eps;
        core[i] = count >= min_pts;
    }
    // union-find over core-core edges
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (core[i] && core[j] && dist[i][j] <= eps) {
                const auto a = find(i), b = find(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
    // component id = lowest core index in it (the root, by the union rule)
    std::vector<int> label(n, -1);
    for (std::size_t i = 0; i < n; ++i)
        if (core[i]) label[i] = static_cast<int>(find(i));
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        int best = -1;
        for (std::size_t j = 0; j < n; ++j)
            if (core[j] && dist[i][j] <= eps) {
                const int c = static_cast<int>(find(j));
                if (best < 0 || c < best) best = c;
            }
        label[i] = best;
    }
    return label;
}

inline double softmax_entry(const Matrix &z, Index i, Index c) {
    double mx = z(i, 0);
    for (Index j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
    double s = 0;
    for (Index j = 0; j < z.cols(); ++j) s += std::exp(z(i, j) - mx);
    return std::exp(z(i, c) - mx) / s;
}

/// Mean over rows of -sum_c q_c log p_c with q = (1 - eps) onehot + eps / C.
inline double smoothed_ce(const Matrix &z, const std::vector<int> &labels, double eps) {
    double total = 0;
    const double classes = static_cast<double>(z.cols());
    for (Index i = 0; i < z.rows(); ++i)
        for (Index c = 0; c < z.cols(); ++c) {
            const double q = (c == labels[static_cast<std::size_t>(i)] ? 1 - eps : 0.0) + eps / classes;
            total -= q * std::log(softmax_entry(z, i, c));
        }
    return total / static_cast<double>(z.rows());
}

/// -(1/B) sum_i sum_c p_t(c) log p_s(c) for one student/teacher pair.
inline double soft_ce(const Matrix &student, const Matrix &teacher) {
    double total = 0;
    for (Index i = 0; i < student.rows(); ++i)
        for (Index c = 0; c < student.cols(); ++c)
            total -= softmax_entry(teacher, i, c) * std::log(softmax_entry(student, i, c));
    return total / static_cast<double>(student.rows());
}

/// Multi-similarity loss with the library's pair construction and mining
/// rules, evaluated term by term.
inline double ms_loss(const Matrix &f, const std::vector<int> &image_of, const std::vector<int> &labels,
                      double alpha, double beta, double margin, double mining_eps, bool label_positives) {
    const auto n = static_cast<std::size_t>(f.rows());
    const auto sim = [&](std::size_t a, std::size_t b) {
        double s = 0;
        for (Index d = 0; d < f.cols(); ++d) s += f(static_cast<Index>(a), d) * f(static_cast<Index>(b), d);
        return s;
    };
    double total = 0;
    for (std::size_t a = 0; a < n; ++a) {
        std::vector<std::size_t> pos, neg;
        const int la = labels[static_cast<std::size_t>(image_of[a])];
        for (std::size_t k = 0; k < n; ++k) {
            if (k == a) continue;
            const int lk = labels[static_cast<std::size_t>(image_of[k])];
            const bool same_image = image_of[k] == image_of[a];
            const bool same_label = la >= 0 && la == lk;
            if (same_image || (label_positives && same_label))
                pos.push_back(k);
            else if (!same_label)
                neg.push_back(k);
        }
        std::vector<std::size_t> kept_pos = pos, kept_neg = neg;
        if (!pos.empty() && !neg.empty()) {
            double min_pos = 1e300, max_neg = -1e300;
            for (auto k : pos) min_pos = std::min(min_pos, sim(a, k));
            for (auto k : neg) max_neg = std::max(max_neg, sim(a, k));
            kept_pos.clear();
            kept_neg.clear();
            for (auto k : pos)
                if (sim(a, k) < max_neg + mining_eps) kept_pos.push_back(k);
            for (auto k : neg)
                if (sim(a, k) > min_pos - mining_eps) kept_neg.push_back(k);
        }
        double sp = 0, sn = 0;
        for (auto k : kept_pos) sp += std::exp(-alpha * (sim(a, k) - margin));
        for (auto k : kept_neg) sn += std::exp(beta * (sim(a, k) - margin));
        total += std::log(1 + sp) / alpha + std::log(1 + sn) / beta;
    }
    return total / static_cast<double>(n);
}

/// ADAM with decoupled weight decay on a flat parameter list, one scalar at a
/// time.
struct ScalarAdam {
    double lr, beta1, beta2, eps, wd;
    std::vector<double> m, v;
    long step = 0;

    void update(std::vector<double> &p, const std::vector<double> &g) {
        if (m.empty()) m.assign(p.size(), 0.0), v.assign(p.size(), 0.0);
        ++step;
        const double c1 = 1 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
            p[i] *= 1 - lr * wd;
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

/// AP at relevant ranks for a 0/1 relevance list in rank order.
inline double average_precision(const std::vector<int> &relevant) {
    double hits = 0, sum = 0;
    for (std::size_t r = 0; r < relevant.size(); ++r)
        if (relevant[r]) {
            hits += 1;
            sum += hits / static_cast<double>(r + 1);
        }
    return hits > 0 ? sum / hits : 0.0;
}

inline Matrix random_matrix(sskd::Rng &rng, Index rows, Index cols, double scale = 1.0) {
    Matrix a(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) a(i, j) = scale * rng.normal();
    return a;
}

} // namespace oracle
