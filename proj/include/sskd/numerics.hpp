#pragma once

// Dense numerics shared by every module: row-major matrix aliases, a one-sided
// Jacobi SVD, the nuclear norm and its subgradient, row-wise softmax, row
// normalization and a central finite-difference gradient.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sskd {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;
using Index = Eigen::Index;

/// Throws std::invalid_argument naming the first non-finite entry of `a`.
template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived> &a, const char *what) {
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            if (!std::isfinite(a(i, j))) {
                std::ostringstream os;
                os << what << ": non-finite entry at (" << i << ", " << j << ")";
                throw std::invalid_argument(os.str());
            }
}

template <typename Scalar>
struct SvdResult {
    MatrixX<Scalar> u;     ///< rows x k, orthonormal columns
    VectorX<Scalar> sigma; ///< descending, k = min(rows, cols)
    MatrixX<Scalar> v;     ///< cols x k, orthonormal columns
};

namespace detail {

template <typename Scalar>
using ColMajorX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// One-sided (Hestenes) Jacobi on the columns of `work` (m x n, m >= n).
/// On return the columns of `work` are mutually orthogonal and `rot`
/// accumulates the applied rotations.
template <typename Scalar>
void hestenes_jacobi(ColMajorX<Scalar> &work, ColMajorX<Scalar> &rot) {
    const Index n = work.cols();
    rot.setIdentity(n, n);
    if (work.squaredNorm() == Scalar(0)) return;
    // A pair counts as orthogonal once |<w_p, w_q>| <= m * eps * |w_p| |w_q|;
    // sweeps stop when none rotates, which also drives the off-diagonal Gram
    // mass far below 1e-14 * |A|_F^2.
    const Scalar tol = std::numeric_limits<Scalar>::epsilon() * Scalar(std::max<Index>(work.rows(), 8));
    constexpr int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (Index p = 0; p + 1 < n; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const Scalar alpha = work.col(p).squaredNorm();
                const Scalar beta = work.col(q).squaredNorm();
                const Scalar gamma = work.col(p).dot(work.col(q));
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const Scalar zeta = (beta - alpha) / (2 * gamma);
                const Scalar t = (zeta >= 0 ? Scalar(1) : Scalar(-1)) /
                                 (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
                const Scalar c = 1 / std::sqrt(1 + t * t);
                const Scalar s = c * t;
                const VectorX<Scalar> wp = work.col(p);
                work.col(p) = c * wp - s * work.col(q);
                work.col(q) = s * wp + c * work.col(q);
                const VectorX<Scalar> vp = rot.col(p);
                rot.col(p) = c * vp - s * rot.col(q);
                rot.col(q) = s * vp + c * rot.col(q);
            }
        }
        if (!rotated) return;
    }
}

/// Replaces column `j` of `q` by a unit vector orthogonal to the columns in
/// `keep`, found by Gram-Schmidt over the canonical basis.
template <typename Scalar>
void complete_column(ColMajorX<Scalar> &q, Index j, const std::vector<Index> &keep) {
    const Index m = q.rows();
    for (Index e = 0; e < m; ++e) {
        VectorX<Scalar> cand = VectorX<Scalar>::Unit(m, e);
        for (int pass = 0; pass < 2; ++pass)
            for (Index k : keep) cand -= q.col(k).dot(cand) * q.col(k);
        const Scalar nrm = cand.norm();
        if (nrm > Scalar(1e-3)) {
            q.col(j) = cand / nrm;
            return;
        }
    }
}

} // namespace detail

/// Thin SVD by one-sided Jacobi rotations. Accepts any finite, non-empty
/// matrix with at most 2048 rows and columns.
template <typename Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived> &a) {
    using Scalar = typename Derived::Scalar;
    if (a.rows() == 0 || a.cols() == 0) throw std::invalid_argument("svd: empty matrix");
    if (a.rows() > 2048 || a.cols() > 2048)
        throw std::invalid_argument("svd: dimensions exceed 2048");
    require_finite(a, "svd");

    const bool transposed = a.rows() < a.cols();
    detail::ColMajorX<Scalar> work;
    if (transposed)
        work = a.transpose();
    else
        work = a;
    detail::ColMajorX<Scalar> rot;
    detail::hestenes_jacobi(work, rot);

    const Index k = work.cols();
    VectorX<Scalar> sig(k);
    for (Index j = 0; j < k; ++j) sig(j) = work.col(j).norm();

    std::vector<Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index x, Index y) { return sig(x) > sig(y); });

    SvdResult<Scalar> out;
    out.sigma.resize(k);
    detail::ColMajorX<Scalar> left(work.rows(), k), right(k, k);
    for (Index j = 0; j < k; ++j) {
        const Index src = order[static_cast<std::size_t>(j)];
        out.sigma(j) = sig(src);
        left.col(j) = work.col(src);
        right.col(j) = rot.col(src);
    }

    // Columns belonging to numerically zero singular values are completed to
    // an orthonormal set instead of normalizing rounding noise.
    const Scalar null_tol =
        std::max<Scalar>(out.sigma(0), std::numeric_limits<Scalar>::min()) *
        std::numeric_limits<Scalar>::epsilon() * Scalar(work.rows());
    std::vector<Index> good;
    for (Index j = 0; j < k; ++j) {
        if (out.sigma(j) > null_tol) {
            left.col(j) /= out.sigma(j);
            good.push_back(j);
        }
    }
    for (Index j = 0; j < k; ++j) {
        if (out.sigma(j) > null_tol) continue;
        detail::complete_column(left, j, good);
        good.push_back(j);
    }

    if (transposed) {
        out.u = right;
        out.v = left;
    } else {
        out.u = left;
        out.v = right;
    }
    return out;
}

/// Sum of singular values.
template <typename Derived>
typename Derived::Scalar nuclear_norm(const Eigen::MatrixBase<Derived> &a) {
    return svd(a).sigma.sum();
}

/// U_r V_r^T over the singular triplets with sigma > 1e-10 * sigma_1. This is
/// the gradient of the nuclear norm wherever the norm is differentiable.
template <typename Derived>
MatrixX<typename Derived::Scalar> nuclear_norm_subgradient(const Eigen::MatrixBase<Derived> &a) {
    using Scalar = typename Derived::Scalar;
    const auto s = svd(a);
    MatrixX<Scalar> g = MatrixX<Scalar>::Zero(a.rows(), a.cols());
    const Scalar cutoff = Scalar(1e-10) * s.sigma(0);
    for (Index j = 0; j < s.sigma.size(); ++j)
        if (s.sigma(j) > cutoff) g.noalias() += s.u.col(j) * s.v.col(j).transpose();
    return g;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived> &z) {
    using Scalar = typename Derived::Scalar;
    require_finite(z, "softmax_rows");
    MatrixX<Scalar> p(z.rows(), z.cols());
    for (Index i = 0; i < z.rows(); ++i) {
        const Scalar mx = z.row(i).maxCoeff();
        p.row(i) = (z.row(i).array() - mx).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived> &z) {
    using Scalar = typename Derived::Scalar;
    require_finite(z, "log_softmax_rows");
    MatrixX<Scalar> out(z.rows(), z.cols());
    for (Index i = 0; i < z.rows(); ++i) {
        const Scalar mx = z.row(i).maxCoeff();
        const Scalar lse = mx + std::log((z.row(i).array() - mx).exp().sum());
        out.row(i) = z.row(i).array() - lse;
    }
    return out;
}

/// Back-propagates dL/dp through p = softmax_rows(z), given p.
template <typename DerivedP, typename DerivedG>
MatrixX<typename DerivedP::Scalar> softmax_rows_backward(const Eigen::MatrixBase<DerivedP> &p,
                                                         const Eigen::MatrixBase<DerivedG> &dp) {
    using Scalar = typename DerivedP::Scalar;
    MatrixX<Scalar> dz(p.rows(), p.cols());
    for (Index i = 0; i < p.rows(); ++i) {
        const Scalar inner = p.row(i).dot(dp.row(i));
        dz.row(i) = p.row(i).array() * (dp.row(i).array() - inner);
    }
    return dz;
}

/// Rows scaled to unit L2 norm; all-zero rows stay zero.
template <typename Derived>
MatrixX<typename Derived::Scalar> l2_normalize_rows(const Eigen::MatrixBase<Derived> &x) {
    using Scalar = typename Derived::Scalar;
    MatrixX<Scalar> y = x;
    for (Index i = 0; i < y.rows(); ++i) {
        const Scalar n = y.row(i).norm();
        if (n > Scalar(0)) y.row(i) /= n;
    }
    return y;
}

/// Back-propagates dL/dy through y = l2_normalize_rows(x).
template <typename DerivedX, typename DerivedG>
MatrixX<typename DerivedX::Scalar> l2_normalize_rows_backward(const Eigen::MatrixBase<DerivedX> &x,
                                                              const Eigen::MatrixBase<DerivedG> &dy) {
    using Scalar = typename DerivedX::Scalar;
    MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        const Scalar n = x.row(i).norm();
        if (n == Scalar(0)) continue;
        const auto y = (x.row(i) / n).eval();
        dx.row(i) = (dy.row(i) - y.dot(dy.row(i)) * y) / n;
    }
    return dx;
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
template <typename Scalar, typename F>
VectorX<Scalar> finite_diff_gradient(F &&f, const VectorX<Scalar> &x, Scalar h) {
    VectorX<Scalar> g(x.size());
    VectorX<Scalar> probe = x;
    for (Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + h;
        const Scalar fp = f(probe);
        probe(i) = x(i) - h;
        const Scalar fm = f(probe);
        probe(i) = x(i);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::domain_error("finite_diff_gradient: non-finite value at coordinate " +
                                    std::to_string(i));
        g(i) = (fp - fm) / (2 * h);
    }
    return g;
}

/// max|a - b| / max(max|a|, max|b|); zero when both vectors vanish.
template <typename DA, typename DB>
typename DA::Scalar max_relative_error(const Eigen::MatrixBase<DA> &a, const Eigen::MatrixBase<DB> &b) {
    using Scalar = typename DA::Scalar;
    const Scalar scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    if (scale == Scalar(0)) return Scalar(0);
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

} // namespace sskd
