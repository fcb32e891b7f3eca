#include "geora/masks.hpp"

#include "geora/spectral.hpp"

namespace geora {

namespace {

void check_rho(double rho, const char* where) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw DomainError(std::string(where) + ": rho must lie in [0, 1]");
    }
}

BitMask threshold_mask(const Matrix& values, double rho) {
    const double tau = quantile_abs(values, rho);
    return BitMask{values.array().abs() <= tau, tau};
}

}  // namespace

void MaskConfig::validate() const {
    check_rho(rho, "MaskConfig");
    if (r_mask < 1) {
        throw DomainError("MaskConfig: r_mask must be positive");
    }
    if (!use_spec && !use_euc) {
        throw DomainError("MaskConfig: at least one of use_spec, use_euc must be enabled");
    }
}

BitMask spectral_mask(const Matrix& w, Index r_mask, double rho) {
    check_rho(rho, "spectral_mask");
    const Index k = std::min(w.rows(), w.cols());
    if (r_mask < 1 || r_mask > k) {
        throw DomainError("spectral_mask: r_mask " + std::to_string(r_mask) + " outside [1, " +
                          std::to_string(k) + "]");
    }
    const Matrix approx = truncate(svd(w), r_mask);
    return threshold_mask(approx, rho);
}

BitMask euclidean_mask(const Matrix& w, double rho) {
    check_rho(rho, "euclidean_mask");
    return threshold_mask(w, rho);
}

GeoMatrix geo_matrix(const Matrix& w, const MaskConfig& cfg) {
    cfg.validate();
    GeoMatrix out;
    std::optional<BitMask> spec;
    std::optional<BitMask> euc;
    if (cfg.use_spec) {
        spec = spectral_mask(w, cfg.r_mask, cfg.rho);
        out.tau_spec = spec->threshold;
    }
    if (cfg.use_euc) {
        euc = euclidean_mask(w, cfg.rho);
        out.tau_euc = euc->threshold;
    }
    if (spec && euc) {
        out.mask = BitMask{spec->bits || euc->bits, std::nullopt};
    } else {
        out.mask = spec ? *spec : *euc;
    }
    out.w_geo = out.mask.bits.select(w, Matrix::Zero(w.rows(), w.cols()));
    return out;
}

double density(const BitMask& m) {
    if (m.bits.size() == 0) {
        return 0.0;
    }
    return static_cast<double>(m.count()) / static_cast<double>(m.bits.size());
}

BitMask random_mask(Index rows, Index cols, double rho, RandomSource& rng) {
    check_rho(rho, "random_mask");
    MaskBits bits(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            bits(i, j) = rng.uniform() < rho;
        }
    }
    return BitMask{std::move(bits), std::nullopt};
}

}  // namespace geora
