#pragma once

#include "geora/matrix_core.hpp"

#include <string>
#include <utility>
#include <vector>

namespace geora {

/// ||sigma(w_tuned) - sigma(w)||_2 / ||sigma(w)||_2.
double nss(const Matrix& w_tuned, const Matrix& w);

/// Share of update energy along each reference right-singular direction.
///
/// s(k) = ||delta_w v_k|| / ||delta_w||_F; head/tail energies aggregate the
/// first `head_count` and last `tail_count` entries as sqrt(sum s^2).
struct AlignmentSpectrum {
    Vector s;
    double head_energy = 0.0;
    double tail_energy = 0.0;
    Index head_count = 0;
    Index tail_count = 0;
};

/// `v` holds orthonormal columns (the right-singular basis of the reference
/// weights). Throws DomainError for a zero update, a non-orthonormal basis,
/// or head_count + tail_count exceeding the basis size.
AlignmentSpectrum alignment_spectrum(const Matrix& delta_w, const Matrix& v, Index head_count,
                                     Index tail_count);

enum class SpectrumNormalization { raw, sigma1_normalized };

struct SpectrumCurve {
    std::string label;
    Vector sigma;
};

struct SpectrumReport {
    std::vector<SpectrumCurve> curves;
    SpectrumNormalization normalization = SpectrumNormalization::raw;
};

SpectrumReport spectrum_report(const std::vector<std::pair<std::string, Matrix>>& inputs,
                               SpectrumNormalization normalization);

/// sum_{i<r} sigma_i^2 / sum_i sigma_i^2.
double top_energy_fraction(const Vector& sigma, Index r);

}  // namespace geora
