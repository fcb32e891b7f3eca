#pragma once

#include "geora/masks.hpp"

#include <array>
#include <optional>
#include <string_view>

namespace geora {

/// Adapter initialization schemes.
///
/// geora     top-r SVD components of the geometry-constrained matrix W_Geo
/// pissa     top-r components of W
/// milora    bottom-r components of W
/// lora      Gaussian A, zero B
/// random_r  Gaussian A and B, amplitude matched to geora's initial product
/// tail_r    bottom-r components of W_Geo
enum class Method { geora, pissa, milora, lora, random_r, tail_r };

inline constexpr std::array<Method, 6> kAllMethods = {
    Method::geora, Method::pissa, Method::milora, Method::lora, Method::random_r, Method::tail_r};

std::string_view to_string(Method m);
/// Throws DomainError on an unknown name.
Method parse_method(std::string_view name);

struct InitSpec {
    Method method = Method::geora;
    Index rank = 16;
    /// Defaults to the rank, i.e. a scale factor of one.
    std::optional<double> alpha;
    MaskConfig mask;
    RandomSource rng{0, "init"};
};

/// Trainable factors a (rank x cols), b (rows x rank) and the frozen residual
/// w_res, with w_res + scale() * b * a equal to the source weights at init.
struct AdapterBundle {
    Matrix a;
    Matrix b;
    Matrix w_res;
    Index rank = 0;
    double alpha = 0.0;
    Method method = Method::geora;
    /// Set when the source matrix had numerical rank below `rank`; the missing
    /// components are zero.
    bool rank_deficient = false;

    double scale() const { return alpha / static_cast<double>(rank); }
    Index rows() const { return w_res.rows(); }
    Index cols() const { return w_res.cols(); }
};

AdapterBundle init_adapter(const Matrix& w, const InitSpec& spec);

/// w_res x + scale * b (a x), without forming b a.
Vector forward(const AdapterBundle& bundle, const Vector& x);

/// w_res + scale * b a.
Matrix merge(const AdapterBundle& bundle);

Index trainable_count(const AdapterBundle& bundle);
Index trainable_count(Index rows, Index cols, Index rank);

}  // namespace geora
