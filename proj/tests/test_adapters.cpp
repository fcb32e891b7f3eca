#include "geora/adapters.hpp"
#include "geora/spectral.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace geora;

namespace {

InitSpec spec_for(Method m, Index r, double rho, std::optional<double> alpha = std::nullopt,
                  Index r_mask = 0, std::uint64_t seed = 0) {
    InitSpec s;
    s.method = m;
    s.rank = r;
    s.alpha = alpha;
    s.mask.rho = rho;
    s.mask.r_mask = r_mask > 0 ? r_mask : r;
    s.rng = RandomSource(seed, "init");
    return s;
}

double rel(const Matrix& a, const Matrix& b) {
    return frobenius_norm(Matrix(a - b)) / frobenius_norm(b);
}

}  // namespace

TEST_CASE("method names round-trip") {
    for (Method m : kAllMethods) CHECK(parse_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_method("dora"), DomainError);
}

TEST_CASE("geora and milora on diag(3,2,1)") {
    const Matrix d = Vector{{3, 2, 1}}.asDiagonal();
    const AdapterBundle g = init_adapter(d, spec_for(Method::geora, 1, 1.0, 1.0));
    CHECK((g.a.cwiseAbs() - Matrix{{std::sqrt(3.0), 0, 0}}).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((g.b.cwiseAbs() - Matrix{{std::sqrt(3.0)}, {0}, {0}}).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((g.w_res - Matrix(Vector{{0, 2, 1}}.asDiagonal())).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(g.scale() == 1.0);

    const AdapterBundle m = init_adapter(d, spec_for(Method::milora, 1, 0.2, 1.0));
    CHECK((m.scale() * m.b * m.a - Matrix(Vector{{0, 0, 1}}.asDiagonal())).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((m.w_res - Matrix(Vector{{3, 2, 0}}.asDiagonal())).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("lora starts from a zero product") {
    RandomSource rng(41, "lora");
    const Matrix w = gaussian_matrix(8, 6, 1.0, rng);
    const AdapterBundle l = init_adapter(w, spec_for(Method::lora, 3, 0.2));
    CHECK(l.b.isZero(0.0));
    CHECK(merge(l) == w);
    CHECK(l.w_res == w);
    const double sd = std::sqrt(l.a.squaredNorm() / static_cast<double>(l.a.size()));
    CHECK(sd == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(0.5));
}

TEST_CASE("random_r amplitude matches the geora product") {
    RandomSource rng(42, "randr");
    const Matrix w = gaussian_matrix(20, 14, 1.0, rng);
    const InitSpec s = spec_for(Method::random_r, 4, 0.3);
    const AdapterBundle r = init_adapter(w, s);
    const GeoMatrix geo = geo_matrix(w, s.mask);
    const double target = frobenius_norm(truncate(svd(geo.w_geo), 4));
    CHECK(frobenius_norm(Matrix(r.scale() * r.b * r.a)) == doctest::Approx(target).epsilon(1e-12));
    CHECK(rel(merge(r), w) <= 1e-10);
}

TEST_CASE("residual-energy identity for geora") {
    RandomSource rng(43, "energy");
    const Matrix w = gaussian_matrix(24, 16, 1.0, rng);
    const InitSpec s = spec_for(Method::geora, 4, 0.2, std::nullopt, 4);
    const AdapterBundle g = init_adapter(w, s);
    const Matrix w_geo = geo_matrix(w, s.mask).w_geo;
    const auto sv = oracle::singular_values(w_geo);
    double tail = 0.0;
    for (std::size_t i = 4; i < sv.size(); ++i) tail += sv[i] * sv[i];
    CHECK(Matrix(w_geo - g.scale() * g.b * g.a).squaredNorm() == doctest::Approx(tail).epsilon(1e-8));
}

TEST_CASE("init_adapter errors and rank deficiency") {
    const Matrix d = Vector{{3, 2, 1}}.asDiagonal();
    CHECK_THROWS_AS(init_adapter(d, spec_for(Method::pissa, 4, 0.2)), DomainError);
    CHECK_THROWS_AS(init_adapter(d, spec_for(Method::pissa, 0, 0.2)), DomainError);
    CHECK_THROWS_AS(init_adapter(d, spec_for(Method::pissa, 1, 0.2, -1.0)), DomainError);

    Matrix low = Matrix::Zero(5, 4);
    low(0, 0) = 2.0;
    const AdapterBundle p = init_adapter(low, spec_for(Method::pissa, 3, 0.2));
    CHECK(p.rank_deficient);
    CHECK(rel(merge(p), low) <= 1e-10);
    CHECK_FALSE(init_adapter(d, spec_for(Method::pissa, 3, 0.2)).rank_deficient);
}

TEST_CASE("forward and merge") {
    RandomSource rng(44, "forward");
    const Matrix w = gaussian_matrix(9, 7, 1.0, rng);
    AdapterBundle b = init_adapter(w, spec_for(Method::pissa, 3, 0.2));
    const Vector x = gaussian_matrix(7, 1, 1.0, rng);
    CHECK((forward(b, x) - w * x).norm() <= 1e-9 * (w * x).norm());
    CHECK_THROWS_AS(forward(b, Vector::Ones(3)), DomainError);

    b.a += gaussian_matrix(3, 7, 0.1, rng);
    b.b += gaussian_matrix(9, 3, 0.1, rng);
    const Vector dense = oracle::matvec(merge(b), x);
    CHECK((forward(b, x) - dense).norm() <= 1e-10 * dense.norm());
    const Matrix naive = b.w_res + b.scale() * oracle::matmul(b.b, b.a);
    CHECK((merge(b) - naive).cwiseAbs().maxCoeff() <= 1e-12);

    b.a.setZero();
    b.b.setZero();
    CHECK(merge(b) == b.w_res);
    CHECK(forward(b, x) == b.w_res * x);
}

TEST_CASE("trainable_count") {
    CHECK(trainable_count(64, 48, 4) == 448);
    CHECK(trainable_count(10, 10, 16) == 320);
    RandomSource rng(45, "count");
    const AdapterBundle b = init_adapter(gaussian_matrix(12, 9, 1.0, rng), spec_for(Method::lora, 2, 0.2));
    CHECK(trainable_count(b) == 2 * (12 + 9));
}

TEST_CASE("adapter properties") {
    RandomSource rng(46, "adapter-props");
    for (int trial = 0; trial < 20; ++trial) {
        const Index rows = 3 + rng.uniform_index(12), cols = 3 + rng.uniform_index(12);
        const Matrix w = gaussian_matrix(rows, cols, 1.0, rng);
        const Index k = std::min(rows, cols);
        const Index r = 1 + rng.uniform_index(k);
        const double rho = 0.05 + 0.9 * rng.uniform();
        for (Method m : kAllMethods) {
            const InitSpec s = spec_for(m, r, rho, std::nullopt, 0, static_cast<std::uint64_t>(trial));
            const AdapterBundle b = init_adapter(w, s);
            CHECK(rel(merge(b), w) <= 1e-10);
            if (m == Method::lora || m == Method::random_r) continue;

            const bool masked = m == Method::geora || m == Method::tail_r;
            const bool top = m == Method::geora || m == Method::pissa;
            const Matrix target = masked ? geo_matrix(w, s.mask).w_geo : w;
            const auto f = svd(target);
            Matrix expect = Matrix::Zero(rows, cols);
            for (Index i = 0; i < r; ++i) {
                const Index c = top ? i : k - r + i;
                expect += f.sigma(c) * f.u.col(c) * f.v.col(c).transpose();
            }
            CHECK(frobenius_norm(Matrix(b.scale() * b.b * b.a - expect)) <=
                  1e-8 * std::max(1.0, frobenius_norm(expect)));

            Matrix merged[3];
            int idx = 0;
            for (double a : {0.5 * static_cast<double>(r), static_cast<double>(r), 2.0 * static_cast<double>(r)}) {
                InitSpec sa = s;
                sa.alpha = a;
                merged[idx++] = merge(init_adapter(w, sa));
            }
            CHECK(rel(merged[0], merged[1]) <= 1e-10);
            CHECK(rel(merged[2], merged[1]) <= 1e-10);
        }
    }
}

TEST_CASE("geora and pissa adapt different subspaces when the principal entry is masked out") {
    const Matrix d = Vector{{3, 2, 1}}.asDiagonal();
    const AdapterBundle g = init_adapter(d, spec_for(Method::geora, 1, 0.5, 1.0, 1));
    const AdapterBundle p = init_adapter(d, spec_for(Method::pissa, 1, 0.5, 1.0, 1));
    const Vector ga = g.a.row(0).normalized(), pa = p.a.row(0).normalized();
    CHECK(std::abs(ga.dot(pa)) < 1.0 - 1e-6);
}
