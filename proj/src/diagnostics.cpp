#include "geora/diagnostics.hpp"

#include "geora/spectral.hpp"

namespace geora {

double nss(const Matrix& w_tuned, const Matrix& w) {
    if (w_tuned.rows() != w.rows() || w_tuned.cols() != w.cols()) {
        throw DomainError("nss: shape mismatch (" + std::to_string(w_tuned.rows()) + "x" +
                          std::to_string(w_tuned.cols()) + " vs " + std::to_string(w.rows()) +
                          "x" + std::to_string(w.cols()) + ")");
    }
    const Vector base = singular_spectrum(w);
    const double denom = base.norm();
    if (denom == 0.0) {
        throw DomainError("nss: reference spectrum is zero");
    }
    return (singular_spectrum(w_tuned) - base).norm() / denom;
}

AlignmentSpectrum alignment_spectrum(const Matrix& delta_w, const Matrix& v, Index head_count,
                                     Index tail_count) {
    if (v.rows() != delta_w.cols()) {
        throw DomainError("alignment_spectrum: basis has " + std::to_string(v.rows()) +
                          " rows but the update has " + std::to_string(delta_w.cols()) + " cols");
    }
    const Index k = v.cols();
    if (head_count < 0 || tail_count < 0 || head_count + tail_count > k) {
        throw DomainError("alignment_spectrum: head + tail counts exceed basis size " +
                          std::to_string(k));
    }
    const Matrix gram = v.transpose() * v;
    const double defect = (gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff();
    if (defect > 1e-6) {
        throw DomainError("alignment_spectrum: basis is not orthonormal (Gram defect " +
                          std::to_string(defect) + ")");
    }
    const double total = frobenius_norm(delta_w);
    if (total == 0.0) {
        throw DomainError("alignment_spectrum: zero update");
    }

    AlignmentSpectrum out;
    out.head_count = head_count;
    out.tail_count = tail_count;
    const Matrix projected = delta_w * v;
    out.s.resize(k);
    for (Index j = 0; j < k; ++j) {
        out.s(j) = projected.col(j).norm() / total;
    }
    out.head_energy = out.s.head(head_count).norm();
    out.tail_energy = out.s.tail(tail_count).norm();
    return out;
}

SpectrumReport spectrum_report(const std::vector<std::pair<std::string, Matrix>>& inputs,
                               SpectrumNormalization normalization) {
    if (inputs.empty()) {
        throw DomainError("spectrum_report: no inputs");
    }
    SpectrumReport report;
    report.normalization = normalization;
    for (const auto& [label, m] : inputs) {
        Vector sigma;
        try {
            sigma = singular_spectrum(m);
        } catch (const NumericError& e) {
            throw NumericError(label + ": " + e.what(), e.residual());
        } catch (const DomainError& e) {
            throw DomainError(label + ": " + e.what());
        }
        if (normalization == SpectrumNormalization::sigma1_normalized && sigma(0) > 0.0) {
            sigma /= sigma(0);
        }
        report.curves.push_back({label, std::move(sigma)});
    }
    return report;
}

double top_energy_fraction(const Vector& sigma, Index r) {
    if (r < 1 || r > sigma.size()) {
        throw DomainError("top_energy_fraction: r " + std::to_string(r) + " outside [1, " +
                          std::to_string(sigma.size()) + "]");
    }
    const double total = sigma.squaredNorm();
    if (total == 0.0) {
        throw DomainError("top_energy_fraction: all-zero spectrum");
    }
    return sigma.head(r).squaredNorm() / total;
}

}  // namespace geora
