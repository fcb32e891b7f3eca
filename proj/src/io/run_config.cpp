#include "geora/io/run_config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace geora::io {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) +
                      "' as " + std::string(expected));
}

double parse_real(std::string_view key, std::string_view value) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
        bad_value(key, value, "a finite real");
    }
    return out;
}

Index parse_count(std::string_view key, std::string_view value) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || out < 0) {
        bad_value(key, value, "a non-negative integer");
    }
    return static_cast<Index>(out);
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no") {
        return false;
    }
    bad_value(key, value, "a boolean");
}

}  // namespace

std::string_view to_string(TaskKind t) {
    return t == TaskKind::regression ? "regression" : "grpo_toy";
}

void RunConfig::set(std::string_view key, std::string_view value) {
    if (key == "method") {
        if (value == "sparseft") {
            sparseft = true;
            return;
        }
        try {
            method = parse_method(value);
            sparseft = false;
        } catch (const DomainError&) {
            bad_value(key, value, "an adapter method or sparseft");
        }
    } else if (key == "rank") {
        rank = parse_count(key, value);
    } else if (key == "alpha") {
        alpha = parse_real(key, value);
    } else if (key == "rho") {
        rho = parse_real(key, value);
    } else if (key == "r_mask") {
        r_mask = parse_count(key, value);
    } else if (key == "use_spec") {
        use_spec = parse_bool(key, value);
    } else if (key == "use_euc") {
        use_euc = parse_bool(key, value);
    } else if (key == "task") {
        if (value == "regression") {
            task = TaskKind::regression;
        } else if (value == "grpo_toy") {
            task = TaskKind::grpo_toy;
        } else {
            bad_value(key, value, "regression or grpo_toy");
        }
    } else if (key == "steps") {
        steps = parse_count(key, value);
    } else if (key == "lr") {
        lr = parse_real(key, value);
    } else if (key == "kl_beta") {
        kl_beta = parse_real(key, value);
    } else if (key == "group_size") {
        group_size = parse_count(key, value);
    } else if (key == "head_count") {
        head_count = parse_count(key, value);
    } else if (key == "tail_count") {
        tail_count = parse_count(key, value);
    } else {
        throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
}

void RunConfig::validate() const {
    if (rank < 1) {
        throw ConfigError("rank must be >= 1");
    }
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw ConfigError("rho must lie in [0, 1]");
    }
    if (alpha && !(*alpha > 0.0)) {
        throw ConfigError("alpha must be positive");
    }
    if (r_mask && *r_mask < 1) {
        throw ConfigError("r_mask must be >= 1");
    }
    if (!use_spec && !use_euc) {
        throw ConfigError("at least one of use_spec, use_euc must be true");
    }
    if (steps && *steps < 1) {
        throw ConfigError("steps must be >= 1");
    }
    if (lr && !(*lr > 0.0)) {
        throw ConfigError("lr must be positive");
    }
    if (kl_beta < 0.0) {
        throw ConfigError("kl_beta must be non-negative");
    }
    if (task == TaskKind::grpo_toy && group_size < 2) {
        throw ConfigError("group_size must be >= 2 for grpo_toy");
    }
}

std::string RunConfig::method_name() const {
    return sparseft ? std::string("sparseft") : std::string(to_string(method));
}

Index RunConfig::effective_steps() const {
    return steps.value_or(task == TaskKind::grpo_toy ? 500 : 300);
}

double RunConfig::effective_lr() const {
    return lr.value_or(task == TaskKind::grpo_toy ? 0.05 : 0.1);
}

MaskConfig RunConfig::mask_config() const {
    MaskConfig m;
    m.rho = rho;
    m.r_mask = r_mask.value_or(rank);
    m.use_spec = use_spec;
    m.use_euc = use_euc;
    return m;
}

InitSpec RunConfig::init_spec(std::uint64_t seed) const {
    InitSpec spec;
    spec.method = method;
    spec.rank = rank;
    spec.alpha = alpha;
    spec.mask = mask_config();
    spec.rng = RandomSource(seed, "init");
    return spec;
}

TrainConfig RunConfig::train_config(std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.steps = effective_steps();
    cfg.lr = effective_lr();
    cfg.sparseft = sparseft;
    cfg.init = init_spec(seed);
    cfg.kl_beta = kl_beta;
    cfg.group_size = group_size;
    cfg.seed = seed;
    cfg.head_count = head_count.value_or(0);
    cfg.tail_count = tail_count.value_or(0);
    return cfg;
}

RunConfig parse_run_config(std::string_view text) {
    RunConfig cfg;
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find_first_of("=:");
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (!seen.insert(std::string(key)).second) {
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                              std::string(key) + "'");
        }
        cfg.set(key, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_run_config(buffer.str());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    }
    cfg.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    cfg.validate();
}

}  // namespace geora::io
