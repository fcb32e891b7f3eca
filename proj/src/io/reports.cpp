#include "geora/io/reports.hpp"

#include <charconv>

namespace geora::io {

std::string format_real(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string train_log_csv(const TrainLog& log) {
    std::string out = "step,reward_or_loss,kl,grad_norm\n";
    for (const auto& r : log.records) {
        out += std::to_string(r.step);
        out += ',';
        out += format_real(r.reward_or_loss);
        out += ',';
        out += format_real(r.kl);
        out += ',';
        out += format_real(r.grad_norm);
        out += '\n';
    }
    return out;
}

nlohmann::json alignment_to_json(const AlignmentSpectrum& a) {
    return {{"s", std::vector<double>(a.s.data(), a.s.data() + a.s.size())},
            {"head_energy", a.head_energy},
            {"tail_energy", a.tail_energy},
            {"head_count", a.head_count},
            {"tail_count", a.tail_count}};
}

std::string spectrum_csv(const std::vector<SpectrumReport>& reports) {
    std::vector<std::pair<std::string, const Vector*>> columns;
    Index rows = 0;
    for (const auto& report : reports) {
        const char* suffix =
            report.normalization == SpectrumNormalization::raw ? ".raw" : ".norm";
        for (const auto& curve : report.curves) {
            columns.emplace_back(curve.label + suffix, &curve.sigma);
            rows = std::max(rows, curve.sigma.size());
        }
    }
    std::string out = "index";
    for (const auto& [name, _] : columns) {
        out += ',';
        out += name;
    }
    out += '\n';
    for (Index i = 0; i < rows; ++i) {
        out += std::to_string(i + 1);
        for (const auto& [_, sigma] : columns) {
            out += ',';
            if (i < sigma->size()) {
                out += format_real((*sigma)(i));
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace geora::io
