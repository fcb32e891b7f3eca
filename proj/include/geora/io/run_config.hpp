#pragma once

#include "geora/harness.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace geora::io {

/// Invalid configuration: unknown key, malformed value, inconsistent settings.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TaskKind { regression, grpo_toy };

std::string_view to_string(TaskKind t);

/// Flat run configuration. Text form is one `key = value` per line, `#`
/// starts a comment. Keys:
///   method rank alpha rho r_mask use_spec use_euc task steps lr kl_beta
///   group_size head_count tail_count
/// `method` accepts every adapter method plus `sparseft`.
struct RunConfig {
    Method method = Method::geora;
    bool sparseft = false;
    Index rank = 16;
    std::optional<double> alpha;
    double rho = 0.2;
    std::optional<Index> r_mask;
    bool use_spec = true;
    bool use_euc = true;
    TaskKind task = TaskKind::grpo_toy;
    std::optional<Index> steps;
    std::optional<double> lr;
    double kl_beta = 0.0;
    Index group_size = 8;
    std::optional<Index> head_count;
    std::optional<Index> tail_count;

    /// Throws ConfigError naming the key on unknown keys or bad values.
    void set(std::string_view key, std::string_view value);
    void validate() const;

    std::string method_name() const;
    Index effective_steps() const;
    double effective_lr() const;
    MaskConfig mask_config() const;
    InitSpec init_spec(std::uint64_t seed) const;
    TrainConfig train_config(std::uint64_t seed) const;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies a `key=value` override on top of an existing config.
void apply_override(RunConfig& cfg, std::string_view assignment);

}  // namespace geora::io
