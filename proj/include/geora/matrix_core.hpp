#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace geora {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense real matrix, row-major, 64-bit. Carries W, W_Geo, W_res and updates.
using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

/// Precondition violations: bad shapes, out-of-range ranks or ratios.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An iterative kernel failed to reach its tolerance.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.derived().array().isFinite().all();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, std::string_view what) {
    if (!all_finite(m)) {
        throw DomainError(std::string(what) + ": matrix contains non-finite entries");
    }
}

/// 1-based nearest rank ceil(rho * n), clamped to [1, n]. Products within a
/// few ulps of an integer are treated as that integer (0.3 * 10 -> 3).
inline Index nearest_rank(double rho, Index n) {
    const double scaled = rho * static_cast<double>(n);
    const double guard = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, scaled);
    const auto rank = static_cast<Index>(std::ceil(scaled - guard));
    return std::clamp<Index>(rank, 1, n);
}

/// Nearest-rank rho-quantile of |m_ij|. rho = 0 gives the minimum absolute
/// entry, rho = 1 the maximum.
template <typename Derived>
typename Derived::Scalar quantile_abs(const Eigen::MatrixBase<Derived>& m, double rho) {
    using Scalar = typename Derived::Scalar;
    if (m.size() == 0) {
        throw DomainError("quantile_abs: empty matrix");
    }
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw DomainError("quantile_abs: rho must lie in [0, 1]");
    }
    std::vector<Scalar> values;
    values.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            values.push_back(std::abs(m(i, j)));
        }
    }
    const auto k = static_cast<std::size_t>(nearest_rank(rho, m.size()) - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
    return values[k];
}

template <typename Derived>
typename Derived::Scalar frobenius_norm(const Eigen::MatrixBase<Derived>& m) {
    // stableNorm rescales, so tiny nonzero entries never underflow to zero.
    return m.stableNorm();
}

template <typename Derived, typename OtherDerived>
VectorX<typename Derived::Scalar> matvec(const Eigen::MatrixBase<Derived>& m,
                                         const Eigen::MatrixBase<OtherDerived>& x) {
    static_assert(OtherDerived::ColsAtCompileTime == 1, "matvec expects a column vector");
    if (x.size() != m.cols()) {
        throw DomainError("matvec: vector length " + std::to_string(x.size()) +
                          " does not match matrix cols " + std::to_string(m.cols()));
    }
    return m * x;
}

/// Counter-based deterministic generator keyed by (seed, stream label).
/// The i-th draw is a pure function of (key, i), so sequences do not depend
/// on platform RNG implementations.
class RandomSource {
public:
    RandomSource(std::uint64_t seed = 0, std::string label = "default");

    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& label() const noexcept { return label_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Standard normal via the Box-Muller cosine branch.
    double normal();
    /// Uniform integer in [0, n).
    Index uniform_index(Index n);

    /// Independent stream with the same seed and label "<label>/<suffix>".
    RandomSource substream(std::string_view suffix) const;

private:
    std::uint64_t seed_;
    std::string label_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

Matrix gaussian_matrix(Index rows, Index cols, double stddev, RandomSource& rng);

/// Haar-ish random matrix with orthonormal columns (rows >= cols), from the
/// sign-fixed QR of a Gaussian matrix.
Matrix random_orthonormal(Index rows, Index cols, RandomSource& rng);

}  // namespace geora
