#pragma once

// Reference computations the tests compare against. Everything here works on
// plain loops over std::vector so it shares no code path with the library.

#include "geora/harness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using geora::Index;
using geora::Matrix;
using geora::Vector;

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const Matrix& m) {
    Dense d(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
    return d;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

inline Vector matvec(const Matrix& m, const Vector& x) {
    Vector out(m.rows());
    for (Index i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (Index j = 0; j < m.cols(); ++j) s += m(i, j) * x(j);
        out(i) = s;
    }
    return out;
}

inline double frobenius(const Matrix& m) {
    double s = 0.0;
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
    return std::sqrt(s);
}

/// Nearest-rank quantile by full sort.
inline double sorted_quantile_abs(const Matrix& m, double rho) {
    std::vector<double> v;
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) v.push_back(std::abs(m(i, j)));
    std::sort(v.begin(), v.end());
    const auto n = static_cast<double>(v.size());
    auto k = static_cast<std::size_t>(std::ceil(rho * n - 1e-9));
    k = std::clamp<std::size_t>(k, 1, v.size());
    return v[k - 1];
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
inline std::vector<double> jacobi_eigenvalues(Dense a) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0, total = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = 0; q < n; ++q) {
                total += a[p][q] * a[p][q];
                if (p != q) off += a[p][q] * a[p][q];
            }
        if (off <= 1e-30 * std::max(total, 1e-300)) break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

/// Singular values as square roots of the eigenvalues of the smaller Gram
/// matrix, descending, length min(rows, cols).
inline std::vector<double> singular_values(const Matrix& m) {
    const bool tall = m.rows() >= m.cols();
    const Index k = tall ? m.cols() : m.rows();
    const Index inner = tall ? m.rows() : m.cols();
    Dense g(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k), 0.0));
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j) {
            double s = 0.0;
            for (Index l = 0; l < inner; ++l)
                s += tall ? m(l, i) * m(l, j) : m(i, l) * m(j, l);
            g[i][j] = s;
        }
    auto ev = jacobi_eigenvalues(g);
    for (double& e : ev) e = std::sqrt(std::max(e, 0.0));
    return ev;
}

/// Central finite-difference gradient of f at w.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& w,
                                double h = 1e-5) {
    Matrix g(w.rows(), w.cols());
    Matrix probe = w;
    for (Index i = 0; i < w.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j) {
            const double keep = probe(i, j);
            probe(i, j) = keep + h;
            const double up = f(probe);
            probe(i, j) = keep - h;
            const double down = f(probe);
            probe(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * h);
        }
    return g;
}

/// Expected exact-match reward of the policy defined by w, summing the
/// probability of every one of the V^L sequences.
inline double expected_reward(const Matrix& w, const geora::GrpoTask& task) {
    const Index V = task.vocab, L = task.length;
    const Matrix feat = matmul(task.readout, w);
    auto log_prob = [&](Index ctx, Index token) {
        std::vector<double> z(static_cast<std::size_t>(V));
        for (Index v = 0; v < V; ++v) {
            double s = 0.0;
            for (Index r = 0; r < feat.cols(); ++r) s += feat(v, r) * task.contexts(r, ctx);
            z[v] = s;
        }
        const double peak = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double x : z) sum += std::exp(x - peak);
        return z[token] - peak - std::log(sum);
    };
    Index total = 1;
    for (Index l = 0; l < L; ++l) total *= V;
    double expected = 0.0;
    for (Index code = 0; code < total; ++code) {
        std::vector<Index> seq(static_cast<std::size_t>(L));
        Index c = code;
        for (Index l = L - 1; l >= 0; --l) {
            seq[l] = c % V;
            c /= V;
        }
        double lp = 0.0;
        for (Index l = 0; l < L; ++l) {
            const Index ctx = l == 0 ? 0 : 1 + (l - 1) * V + seq[l - 1];
            lp += log_prob(ctx, seq[l]);
        }
        expected += std::exp(lp) * (seq == task.target ? 1.0 : 0.0);
    }
    return expected;
}

}  // namespace oracle
