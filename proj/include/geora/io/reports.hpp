#pragma once

#include "geora/diagnostics.hpp"
#include "geora/harness.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace geora::io {

/// Shortest round-trip decimal form of a double.
std::string format_real(double v);

/// Header `step,reward_or_loss,kl,grad_norm`, one row per record.
std::string train_log_csv(const TrainLog& log);

nlohmann::json alignment_to_json(const AlignmentSpectrum& a);

/// Columns `index` then one per curve; rows are 1-based singular value ranks.
/// Shorter curves leave trailing cells empty.
std::string spectrum_csv(const std::vector<SpectrumReport>& reports);

}  // namespace geora::io
