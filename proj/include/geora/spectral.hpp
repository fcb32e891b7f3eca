#pragma once

#include "geora/matrix_core.hpp"

#include <numeric>

namespace geora {

/// Thin SVD m = u * diag(sigma) * v^T with k = min(rows, cols).
///
/// sigma is non-increasing, u and v have orthonormal columns, and in every
/// column of u the entry of largest magnitude (first one on ties) is
/// non-negative. For repeated singular values the basis of the degenerate
/// subspace is deterministic but otherwise arbitrary.
template <typename Scalar>
struct SvdFactors {
    MatrixX<Scalar> u;
    VectorX<Scalar> sigma;
    MatrixX<Scalar> v;

    Index size() const { return sigma.size(); }
};

struct SvdOptions {
    /// Largest admissible |a_i . a_j| / (|a_i| |a_j|) between working columns.
    double tolerance = 1e-12;
    int max_sweeps = 100;
    bool compute_vectors = true;
};

namespace detail {

template <typename Scalar>
void apply_sign_convention(SvdFactors<Scalar>& f) {
    for (Index k = 0; k < f.size(); ++k) {
        Index arg = 0;
        f.u.col(k).cwiseAbs().maxCoeff(&arg);
        if (f.u(arg, k) < 0) {
            f.u.col(k) = -f.u.col(k);
            f.v.col(k) = -f.v.col(k);
        }
    }
}

/// One-sided (Hestenes) Jacobi on a tall column-major copy. Rotates column
/// pairs until every pair is orthogonal to `tolerance`; the column norms are
/// then the singular values and the accumulated rotations give V.
template <typename Scalar>
SvdFactors<Scalar> jacobi_svd_tall(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> work,
                                   const SvdOptions& opts) {
    using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Index m = work.rows();
    const Index n = work.cols();
    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    const Scalar scale = work.norm();
    // Columns below this norm are numerically zero and take no part in rotations.
    const Scalar zero_norm = eps * static_cast<Scalar>(std::max(m, n)) * scale;
    const Scalar zero_sq = zero_norm * zero_norm;

    ColMatrix v;
    if (opts.compute_vectors) {
        v = ColMatrix::Identity(n, n);
    }
    VectorX<Scalar> sq(n);
    for (Index j = 0; j < n; ++j) {
        sq(j) = work.col(j).squaredNorm();
    }

    bool converged = n < 2 || scale == Scalar(0);
    Scalar residual = 0;
    for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
        residual = 0;
        for (Index i = 0; i + 1 < n; ++i) {
            for (Index j = i + 1; j < n; ++j) {
                const Scalar alpha = sq(i);
                const Scalar beta = sq(j);
                if (alpha <= zero_sq || beta <= zero_sq) {
                    continue;
                }
                const Scalar gamma = work.col(i).dot(work.col(j));
                const Scalar off = std::abs(gamma) / std::sqrt(alpha * beta);
                residual = std::max(residual, off);
                if (off <= static_cast<Scalar>(opts.tolerance)) {
                    continue;
                }
                const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
                const Scalar t = (zeta >= 0 ? Scalar(1) : Scalar(-1)) /
                                 (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
                const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
                const Scalar s = c * t;
                for (Index r = 0; r < m; ++r) {
                    const Scalar wi = work(r, i);
                    const Scalar wj = work(r, j);
                    work(r, i) = c * wi - s * wj;
                    work(r, j) = s * wi + c * wj;
                }
                if (opts.compute_vectors) {
                    for (Index r = 0; r < n; ++r) {
                        const Scalar vi = v(r, i);
                        const Scalar vj = v(r, j);
                        v(r, i) = c * vi - s * vj;
                        v(r, j) = s * vi + c * vj;
                    }
                }
                sq(i) = work.col(i).squaredNorm();
                sq(j) = work.col(j).squaredNorm();
            }
        }
        converged = residual <= static_cast<Scalar>(opts.tolerance);
    }
    if (!converged) {
        throw NumericError("svd: one-sided Jacobi did not converge within " +
                               std::to_string(opts.max_sweeps) + " sweeps (residual " +
                               std::to_string(static_cast<double>(residual)) + ")",
                           static_cast<double>(residual));
    }

    VectorX<Scalar> norms(n);
    for (Index j = 0; j < n; ++j) {
        norms(j) = work.col(j).norm();
    }
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return norms(a) > norms(b); });

    SvdFactors<Scalar> f;
    f.sigma.resize(n);
    for (Index k = 0; k < n; ++k) {
        const Scalar s = norms(order[static_cast<std::size_t>(k)]);
        f.sigma(k) = s <= zero_norm ? Scalar(0) : s;
    }
    if (!opts.compute_vectors) {
        return f;
    }

    f.u = MatrixX<Scalar>::Zero(m, n);
    f.v.resize(n, n);
    Index filled = 0;
    for (Index k = 0; k < n; ++k) {
        const Index src = order[static_cast<std::size_t>(k)];
        f.v.col(k) = v.col(src);
        if (f.sigma(k) > 0) {
            f.u.col(k) = work.col(src) / norms(src);
            ++filled;
        }
    }
    // Complete u over the numerical null space with orthonormalized unit vectors.
    Index candidate = 0;
    for (Index k = filled; k < n; ++k) {
        while (candidate < m) {
            VectorX<Scalar> e = VectorX<Scalar>::Unit(m, candidate++);
            for (int pass = 0; pass < 2; ++pass) {
                for (Index p = 0; p < k; ++p) {
                    e -= f.u.col(p).dot(e) * f.u.col(p);
                }
            }
            const Scalar len = e.norm();
            if (len > Scalar(0.5)) {
                f.u.col(k) = e / len;
                break;
            }
        }
    }

    apply_sign_convention(f);
    return f;
}

}  // namespace detail

template <typename Derived>
SvdFactors<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& m,
                                         const SvdOptions& opts = {}) {
    using Scalar = typename Derived::Scalar;
    using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (m.size() == 0) {
        throw DomainError("svd: empty matrix");
    }
    require_finite(m, "svd");
    if (m.rows() >= m.cols()) {
        return detail::jacobi_svd_tall<Scalar>(ColMatrix(m), opts);
    }
    auto t = detail::jacobi_svd_tall<Scalar>(ColMatrix(m.transpose()), opts);
    if (!opts.compute_vectors) {
        return t;
    }
    SvdFactors<Scalar> f{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    detail::apply_sign_convention(f);
    return f;
}

/// sum_{i<r} sigma_i u_i v_i^T, the best rank-r approximation in Frobenius norm.
template <typename Scalar>
MatrixX<Scalar> truncate(const SvdFactors<Scalar>& f, Index r) {
    if (r < 1 || r > f.size()) {
        throw DomainError("truncate: rank " + std::to_string(r) + " outside [1, " +
                          std::to_string(f.size()) + "]");
    }
    if (f.u.cols() != f.size() || f.v.cols() != f.size()) {
        throw DomainError("truncate: factors were computed without singular vectors");
    }
    return f.u.leftCols(r) * f.sigma.head(r).asDiagonal() * f.v.leftCols(r).transpose();
}

template <typename Derived>
VectorX<typename Derived::Scalar> singular_spectrum(const Eigen::MatrixBase<Derived>& m) {
    SvdOptions opts;
    opts.compute_vectors = false;
    return svd(m, opts).sigma;
}

}  // namespace geora
