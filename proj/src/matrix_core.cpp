#include "geora/matrix_core.hpp"

#include <numbers>

namespace geora {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

RandomSource::RandomSource(std::uint64_t seed, std::string label)
    : seed_(seed), label_(std::move(label)), key_(mix64(seed ^ mix64(fnv1a(label_)))) {}

std::uint64_t RandomSource::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

double RandomSource::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomSource::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Index RandomSource::uniform_index(Index n) {
    if (n <= 0) {
        throw DomainError("uniform_index: n must be positive");
    }
    return static_cast<Index>(uniform() * static_cast<double>(n)) % n;
}

RandomSource RandomSource::substream(std::string_view suffix) const {
    return RandomSource(seed_, label_ + "/" + std::string(suffix));
}

Matrix gaussian_matrix(Index rows, Index cols, double stddev, RandomSource& rng) {
    if (!(stddev >= 0.0)) {
        throw DomainError("gaussian_matrix: stddev must be non-negative");
    }
    if (rows < 0 || cols < 0) {
        throw DomainError("gaussian_matrix: negative shape");
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = stddev * rng.normal();
        }
    }
    return m;
}

Matrix random_orthonormal(Index rows, Index cols, RandomSource& rng) {
    if (cols > rows) {
        throw DomainError("random_orthonormal: cols must not exceed rows");
    }
    const Eigen::MatrixXd g = gaussian_matrix(rows, cols, 1.0, rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Index j = 0; j < cols; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) = -q.col(j);
        }
    }
    return q;
}

}  // namespace geora
