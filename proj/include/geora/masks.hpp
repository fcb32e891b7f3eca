#pragma once

#include "geora/matrix_core.hpp"

#include <optional>

namespace geora {

using MaskBits = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Boolean selection over a weight matrix. `threshold` is the magnitude
/// cutoff the mask was built from, when there is a single one.
struct BitMask {
    MaskBits bits;
    std::optional<double> threshold;

    Index rows() const { return bits.rows(); }
    Index cols() const { return bits.cols(); }
    Index count() const { return bits.count(); }
};

struct MaskConfig {
    double rho = 0.2;
    /// Rank of the approximation the spectral prior thresholds.
    Index r_mask = 16;
    bool use_spec = true;
    bool use_euc = true;

    void validate() const;
};

/// Entries whose magnitude in the rank-r_mask truncation is at or below that
/// truncation's rho-quantile.
BitMask spectral_mask(const Matrix& w, Index r_mask, double rho);

/// Entries of w at or below the rho-quantile of |w|.
BitMask euclidean_mask(const Matrix& w, double rho);

struct GeoMatrix {
    Matrix w_geo;
    BitMask mask;
    std::optional<double> tau_spec;
    std::optional<double> tau_euc;
};

/// Union of the enabled priors and w restricted to it (zeros elsewhere).
GeoMatrix geo_matrix(const Matrix& w, const MaskConfig& cfg);

double density(const BitMask& m);

/// Independent Bernoulli(rho) selection, for sparse-noise baselines.
BitMask random_mask(Index rows, Index cols, double rho, RandomSource& rng);

}  // namespace geora
