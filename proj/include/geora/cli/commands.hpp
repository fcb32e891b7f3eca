#pragma once

#include "geora/harness.hpp"
#include "geora/io/run_config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace geora::cli {

namespace fs = std::filesystem;

/// 0 = all requested work succeeded (a collapsed run included), 1 = partial
/// failure, 2 = configuration error.
enum ExitCode : int { kOk = 0, kPartialFailure = 1, kConfigError = 2 };

struct GlobalOptions {
    std::optional<fs::path> config;
    /// `key=value` entries applied on top of the config file.
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    fs::path out = ".";
    unsigned threads = 1;
    bool f32 = false;
};

io::RunConfig resolve_config(const GlobalOptions& g);

/// Every *.npy file in `dir`, sorted by file name; the stem is the layer name.
std::vector<fs::path> list_arrays(const fs::path& dir);

int cmd_init(const fs::path& weights_dir, const GlobalOptions& g, std::ostream& err);

struct DiagnoseOptions {
    fs::path before;
    /// Either a directory of *.npy files or an `init` output directory with a
    /// manifest, in which case the merged adapters are compared.
    fs::path after;
    std::optional<fs::path> report;
    std::optional<Index> head_count;
    std::optional<Index> tail_count;
};

int cmd_diagnose(const DiagnoseOptions& opts, const GlobalOptions& g, std::ostream& err);

struct SpectrumOptions {
    std::vector<fs::path> inputs;
    std::optional<Index> rank;
    std::optional<double> rho;
    std::optional<fs::path> csv;
};

int cmd_spectrum(const SpectrumOptions& opts, const GlobalOptions& g, std::ostream& err);

struct TrainOptions {
    /// Starting weights; a 32x32 synthetic power-law matrix when absent.
    std::optional<fs::path> weights;
    /// Relative size of the regression target shift (0: target equals w0).
    double target_shift = 0.1;
    /// Optional trust-region bound, reported against the run's peak KL.
    std::optional<double> kl_delta;
};

int cmd_train(const TrainOptions& opts, const GlobalOptions& g, std::ostream& err);

struct CompareOptions {
    TrainOptions base;
    /// Adapter method names or `sparseft`; empty means all of them.
    std::vector<std::string> methods;
    /// Empty means the config's learning rate.
    std::vector<double> lrs;
};

int cmd_compare(const CompareOptions& opts, const GlobalOptions& g, std::ostream& err);

/// Default synthetic starting weights for train/compare.
Matrix default_weights(std::uint64_t seed);

ToyTask build_task(const io::RunConfig& cfg, const Matrix& w0, std::uint64_t seed,
                   double target_shift);

}  // namespace geora::cli
