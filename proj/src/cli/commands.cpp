#include "geora/cli/commands.hpp"

#include "geora/io/manifest.hpp"
#include "geora/io/npy.hpp"
#include "geora/io/reports.hpp"
#include "geora/parallel.hpp"
#include "geora/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <ostream>

namespace geora::cli {

using nlohmann::json;

namespace {

constexpr double kPreservationTolerance = 1e-10;

io::NpyDtype output_dtype(const GlobalOptions& g) {
    return g.f32 ? io::NpyDtype::f4 : io::NpyDtype::f8;
}

std::string layer_name(const fs::path& p) {
    return p.stem().string();
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw io::ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

// Per-item outcome slot filled by workers.
struct Outcome {
    bool ok = false;
    std::string error;
};

}  // namespace

io::RunConfig resolve_config(const GlobalOptions& g) {
    io::RunConfig cfg = g.config ? io::load_run_config(*g.config) : io::RunConfig{};
    for (const auto& o : g.overrides) {
        io::apply_override(cfg, o);
    }
    cfg.validate();
    return cfg;
}

std::vector<fs::path> list_arrays(const fs::path& dir) {
    std::vector<fs::path> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".npy") {
            out.push_back(entry.path());
        }
    }
    if (ec) {
        throw io::ConfigError("cannot list " + dir.string() + ": " + ec.message());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// init
// ---------------------------------------------------------------------------

int cmd_init(const fs::path& weights_dir, const GlobalOptions& g, std::ostream& err) {
    const io::RunConfig cfg = resolve_config(g);
    if (cfg.sparseft) {
        throw io::ConfigError("init builds adapters; method 'sparseft' has no adapter form");
    }
    const auto files = list_arrays(weights_dir);
    if (files.empty()) {
        err << "init: no .npy files in " << weights_dir.string() << "\n";
        return kPartialFailure;
    }
    ensure_dir(g.out);

    const InitSpec spec = cfg.init_spec(g.seed);
    std::vector<Outcome> outcomes(files.size());
    std::vector<io::ManifestLayer> stored(files.size());
    std::vector<std::string> warnings(files.size());

    parallel_for(files.size(), g.threads, [&](std::size_t i) {
        const std::string name = layer_name(files[i]);
        try {
            const Matrix w = io::load_npy(files[i]);
            InitSpec layer_spec = spec;
            layer_spec.rng = spec.rng.substream(name);
            const AdapterBundle bundle = init_adapter(w, layer_spec);
            const double base = frobenius_norm(w);
            const double residual = frobenius_norm(merge(bundle) - w);
            const double rel = base > 0.0 ? residual / base : residual;
            if (!(rel <= kPreservationTolerance)) {
                outcomes[i].error = "function-preservation gate failed (residual norm " +
                                    io::format_real(residual) + ")";
                return;
            }
            if (bundle.rank_deficient) {
                warnings[i] = "source has numerical rank below " + std::to_string(bundle.rank) +
                              "; missing components are zero";
            }
            stored[i] = io::store_layer(g.out, name, bundle, output_dtype(g));
            outcomes[i].ok = true;
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    });

    io::AdapterManifest manifest;
    manifest.method = cfg.method_name();
    manifest.rank = cfg.rank;
    manifest.alpha = cfg.alpha.value_or(static_cast<double>(cfg.rank));
    manifest.rho = cfg.rho;
    manifest.r_mask = cfg.r_mask.value_or(cfg.rank);
    manifest.use_spec = cfg.use_spec;
    manifest.use_euc = cfg.use_euc;
    manifest.seed = g.seed;
    bool all_ok = true;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!warnings[i].empty()) {
            err << "init: warning: " << layer_name(files[i]) << ": " << warnings[i] << "\n";
        }
        if (outcomes[i].ok) {
            manifest.layers.push_back(stored[i]);
        } else {
            all_ok = false;
            err << "init: " << files[i].string() << ": " << outcomes[i].error << "\n";
        }
    }
    io::write_manifest(g.out, manifest);
    return all_ok ? kOk : kPartialFailure;
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

int cmd_diagnose(const DiagnoseOptions& opts, const GlobalOptions& g, std::ostream& err) {
    const io::RunConfig cfg = resolve_config(g);
    const auto before_files = list_arrays(opts.before);
    if (before_files.empty()) {
        err << "diagnose: no .npy files in " << opts.before.string() << "\n";
        return kPartialFailure;
    }

    // Resolve the "after" side: merged adapters or plain arrays.
    std::map<std::string, std::function<Matrix()>> after;
    Index default_count = cfg.rank;
    if (fs::exists(opts.after / io::kManifestName)) {
        auto manifest = std::make_shared<io::AdapterManifest>(io::read_manifest(opts.after));
        default_count = manifest->rank;
        for (const auto& layer : manifest->layers) {
            after[layer.name] = [manifest, layer, dir = opts.after] {
                return merge(io::load_layer(dir, *manifest, layer));
            };
        }
    } else {
        for (const auto& p : list_arrays(opts.after)) {
            after[layer_name(p)] = [p] { return io::load_npy(p); };
        }
    }
    const Index head_req = opts.head_count.value_or(cfg.head_count.value_or(default_count));
    const Index tail_req = opts.tail_count.value_or(cfg.tail_count.value_or(default_count));

    for (const auto& p : before_files) {
        if (!after.contains(layer_name(p))) {
            err << "diagnose: layer '" << layer_name(p) << "' missing from " << opts.after.string()
                << "\n";
            return kPartialFailure;
        }
    }
    if (after.size() != before_files.size()) {
        for (const auto& [name, _] : after) {
            const bool known = std::any_of(before_files.begin(), before_files.end(),
                                           [&](const fs::path& p) { return layer_name(p) == name; });
            if (!known) {
                err << "diagnose: layer '" << name << "' missing from " << opts.before.string() << "\n";
                return kPartialFailure;
            }
        }
    }

    std::vector<Outcome> outcomes(before_files.size());
    std::vector<json> layers(before_files.size());
    std::vector<double> layer_nss(before_files.size(), 0.0);
    std::vector<std::optional<AlignmentSpectrum>> aligned(before_files.size());

    parallel_for(before_files.size(), g.threads, [&](std::size_t i) {
        const std::string name = layer_name(before_files[i]);
        try {
            const Matrix w = io::load_npy(before_files[i]);
            const Matrix tuned = after.at(name)();
            if (tuned.rows() != w.rows() || tuned.cols() != w.cols()) {
                throw DomainError("shape mismatch " + std::to_string(w.rows()) + "x" +
                                  std::to_string(w.cols()) + " vs " + std::to_string(tuned.rows()) +
                                  "x" + std::to_string(tuned.cols()));
            }
            json layer = {{"name", name}, {"shape", {w.rows(), w.cols()}}};
            layer_nss[i] = nss(tuned, w);
            layer["nss"] = layer_nss[i];
            const Matrix delta = tuned - w;
            if (frobenius_norm(delta) == 0.0) {
                layer["zero_update"] = true;
                layer["alignment"] = nullptr;
            } else {
                const auto f = svd(w);
                const Index k = f.size();
                Index h = head_req;
                Index t = tail_req;
                if (h + t > k) {
                    h = std::min(h, k / 2);
                    t = std::min(t, k - h);
                }
                aligned[i] = alignment_spectrum(delta, f.v, h, t);
                layer["zero_update"] = false;
                layer["alignment"] = io::alignment_to_json(*aligned[i]);
            }
            layers[i] = std::move(layer);
            outcomes[i].ok = true;
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    });

    json report_layers = json::array();
    double nss_sum = 0.0;
    double head_sum = 0.0;
    double tail_sum = 0.0;
    std::size_t n_ok = 0;
    std::size_t n_aligned = 0;
    bool all_ok = true;
    for (std::size_t i = 0; i < before_files.size(); ++i) {
        if (!outcomes[i].ok) {
            all_ok = false;
            err << "diagnose: layer '" << layer_name(before_files[i]) << "': " << outcomes[i].error
                << "\n";
            continue;
        }
        report_layers.push_back(layers[i]);
        nss_sum += layer_nss[i];
        ++n_ok;
        if (aligned[i]) {
            head_sum += aligned[i]->head_energy;
            tail_sum += aligned[i]->tail_energy;
            ++n_aligned;
        }
    }
    json mean = {{"nss", n_ok ? nss_sum / static_cast<double>(n_ok) : 0.0},
                 {"layers", n_ok},
                 {"aligned_layers", n_aligned}};
    if (n_aligned > 0) {
        mean["head_energy"] = head_sum / static_cast<double>(n_aligned);
        mean["tail_energy"] = tail_sum / static_cast<double>(n_aligned);
    } else {
        mean["head_energy"] = nullptr;
        mean["tail_energy"] = nullptr;
    }
    const json report = {{"format_version", "1.0"},
                         {"head_count", head_req},
                         {"tail_count", tail_req},
                         {"layers", report_layers},
                         {"mean", mean}};
    const fs::path path = opts.report.value_or(g.out / "diagnostics.json");
    if (path.has_parent_path()) {
        ensure_dir(path.parent_path());
    }
    io::write_text_atomic(path, report.dump(2) + "\n");
    return all_ok ? kOk : kPartialFailure;
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

int cmd_spectrum(const SpectrumOptions& opts, const GlobalOptions& g, std::ostream& err) {
    const io::RunConfig cfg = resolve_config(g);
    if (opts.inputs.empty()) {
        throw io::ConfigError("spectrum: no inputs given");
    }
    const Index rank = opts.rank.value_or(cfg.rank);
    const double rho = opts.rho.value_or(cfg.rho);
    if (!(rho >= 0.0 && rho <= 1.0) || rank < 1) {
        throw io::ConfigError("spectrum: need rank >= 1 and rho in [0, 1]");
    }

    struct Curves {
        SpectrumReport raw;
        SpectrumReport norm;
        json summary;
    };
    std::vector<Outcome> outcomes(opts.inputs.size());
    std::vector<Curves> results(opts.inputs.size());

    parallel_for(opts.inputs.size(), g.threads, [&](std::size_t i) {
        const std::string stem = layer_name(opts.inputs[i]);
        try {
            const Matrix w = io::load_npy(opts.inputs[i]);
            MaskConfig mask = cfg.mask_config();
            mask.rho = rho;
            mask.r_mask = opts.rank ? rank : cfg.r_mask.value_or(rank);
            const GeoMatrix geo = geo_matrix(w, mask);
            RandomSource rng(g.seed, "spectrum/" + stem);
            const double rms = frobenius_norm(w) / std::sqrt(static_cast<double>(w.size()));
            const Matrix dense = gaussian_matrix(w.rows(), w.cols(), rms, rng);
            const BitMask keep = random_mask(w.rows(), w.cols(), rho, rng);
            const Matrix sparse =
                keep.bits.select(gaussian_matrix(w.rows(), w.cols(), rms, rng), Matrix::Zero(w.rows(), w.cols()));
            const std::vector<std::pair<std::string, Matrix>> inputs = {
                {stem + "/W", w},
                {stem + "/W_Geo", geo.w_geo},
                {stem + "/dense_noise", dense},
                {stem + "/sparse_noise", sparse}};
            results[i].raw = spectrum_report(inputs, SpectrumNormalization::raw);
            results[i].norm = spectrum_report(inputs, SpectrumNormalization::sigma1_normalized);
            json fractions = json::object();
            const Index r = std::min(rank, std::min(w.rows(), w.cols()));
            for (const auto& curve : results[i].raw.curves) {
                fractions[curve.label] = curve.sigma.squaredNorm() > 0.0
                                             ? json(top_energy_fraction(curve.sigma, r))
                                             : json(nullptr);
            }
            results[i].summary = {{"input", opts.inputs[i].string()},
                                  {"rank", r},
                                  {"rho", rho},
                                  {"mask_density", density(geo.mask)},
                                  {"top_energy_fraction", fractions}};
            outcomes[i].ok = true;
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    });

    std::vector<SpectrumReport> reports;
    json summary = json::array();
    bool all_ok = true;
    for (std::size_t i = 0; i < opts.inputs.size(); ++i) {
        if (!outcomes[i].ok) {
            all_ok = false;
            err << "spectrum: " << opts.inputs[i].string() << ": " << outcomes[i].error << "\n";
            continue;
        }
        reports.push_back(results[i].raw);
        reports.push_back(results[i].norm);
        summary.push_back(results[i].summary);
    }
    const fs::path csv = opts.csv.value_or(g.out / "spectrum.csv");
    if (csv.has_parent_path()) {
        ensure_dir(csv.parent_path());
    }
    if (!reports.empty()) {
        io::write_text_atomic(csv, io::spectrum_csv(reports));
        auto summary_path = csv;
        summary_path.replace_extension(".json");
        io::write_text_atomic(summary_path, summary.dump(2) + "\n");
    }
    return all_ok ? kOk : kPartialFailure;
}

// ---------------------------------------------------------------------------
// train / compare
// ---------------------------------------------------------------------------

Matrix default_weights(std::uint64_t seed) {
    return synth_weight(32, 32, 1.5, RandomSource(seed, "weights"));
}

ToyTask build_task(const io::RunConfig& cfg, const Matrix& w0, std::uint64_t seed,
                   double target_shift) {
    const RandomSource rng(seed, "task");
    if (cfg.task == io::TaskKind::grpo_toy) {
        return make_grpo_task(w0, GrpoOptions{}, rng);
    }
    RegressionOptions opts;
    opts.shift = target_shift;
    opts.skip = cfg.rank;
    return make_regression_task(w0, opts, rng);
}

namespace {

json run_summary(const io::RunConfig& cfg, const TrainConfig& tc, const TrainResult& result,
                 const TrainOptions& opts) {
    const TrainLog& log = result.log;
    json s = {{"method", tc.method_name()},
              {"task", io::to_string(cfg.task)},
              {"lr", tc.lr},
              {"steps", tc.steps},
              {"completed_steps", log.records.size()},
              {"seed", tc.seed},
              {"kl_beta", tc.kl_beta},
              {"final_reward_or_loss", log.final_reward_or_loss},
              {"final_kl", log.final_kl},
              {"max_kl", log.max_kl},
              {"collapsed", log.collapsed},
              {"collapse_step", log.collapse_step ? json(*log.collapse_step) : json(nullptr)},
              {"aborted", log.abort_reason.has_value()},
              {"abort_reason", log.abort_reason ? json(*log.abort_reason) : json(nullptr)},
              {"nss", log.final_nss}};
    if (log.final_alignment) {
        s["head_energy"] = log.final_alignment->head_energy;
        s["tail_energy"] = log.final_alignment->tail_energy;
    } else {
        s["head_energy"] = nullptr;
        s["tail_energy"] = nullptr;
    }
    s["trainable_params"] = result.bundle ? trainable_count(*result.bundle)
                                          : (result.support ? result.support->count() : 0);
    if (opts.kl_delta) {
        s["kl_delta"] = *opts.kl_delta;
        s["kl_delta_exceeded"] = log.max_kl > *opts.kl_delta;
    }
    return s;
}

std::string cell_name(const std::string& method, double lr) {
    return method + "_lr" + io::format_real(lr);
}

}  // namespace

int cmd_train(const TrainOptions& opts, const GlobalOptions& g, std::ostream& err) {
    const io::RunConfig cfg = resolve_config(g);
    ensure_dir(g.out);

    const Matrix w0 = opts.weights ? io::load_npy(*opts.weights) : default_weights(g.seed);
    const ToyTask task = build_task(cfg, w0, g.seed, opts.target_shift);
    const TrainConfig tc = cfg.train_config(g.seed);
    TrainResult result;
    try {
        result = train(w0, task, tc);
    } catch (const DomainError& e) {
        throw io::ConfigError(std::string("train: ") + e.what());
    }
    io::write_text_atomic(g.out / "trainlog.csv", io::train_log_csv(result.log));
    io::write_text_atomic(g.out / "summary.json", run_summary(cfg, tc, result, opts).dump(2) + "\n");
    if (result.log.collapsed) {
        err << "train: run collapsed"
            << (result.log.abort_reason ? " (" + *result.log.abort_reason + ")" : std::string())
            << "\n";
    }
    return kOk;
}

int cmd_compare(const CompareOptions& opts, const GlobalOptions& g, std::ostream& err) {
    const io::RunConfig base = resolve_config(g);
    std::vector<std::string> methods = opts.methods;
    if (methods.empty()) {
        for (Method m : kAllMethods) {
            methods.emplace_back(to_string(m));
        }
        methods.emplace_back("sparseft");
    }
    std::vector<double> lrs = opts.lrs;
    if (lrs.empty()) {
        lrs.push_back(base.effective_lr());
    }

    struct Cell {
        io::RunConfig cfg;
        TrainConfig tc;
        std::string name;
    };
    std::vector<Cell> cells;
    for (const auto& m : methods) {
        for (double lr : lrs) {
            Cell c{base, {}, cell_name(m, lr)};
            c.cfg.set("method", m);
            c.cfg.lr = lr;
            c.cfg.validate();
            c.tc = c.cfg.train_config(g.seed);
            cells.push_back(std::move(c));
        }
    }
    ensure_dir(g.out);

    const Matrix w0 = opts.base.weights ? io::load_npy(*opts.base.weights) : default_weights(g.seed);
    const ToyTask task = build_task(base, w0, g.seed, opts.base.target_shift);

    std::vector<Outcome> outcomes(cells.size());
    std::vector<json> summaries(cells.size());
    parallel_for(cells.size(), g.threads, [&](std::size_t i) {
        try {
            const TrainResult result = train(w0, task, cells[i].tc);
            io::write_text_atomic(g.out / (cells[i].name + ".csv"), io::train_log_csv(result.log));
            summaries[i] = run_summary(cells[i].cfg, cells[i].tc, result, opts.base);
            summaries[i]["csv"] = cells[i].name + ".csv";
            outcomes[i].ok = true;
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    });

    json runs = json::array();
    bool all_ok = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!outcomes[i].ok) {
            all_ok = false;
            err << "compare: " << cells[i].name << ": " << outcomes[i].error << "\n";
            continue;
        }
        runs.push_back(summaries[i]);
    }
    io::write_text_atomic(g.out / "summary.json",
                          json{{"task", io::to_string(base.task)}, {"seed", g.seed}, {"runs", runs}}.dump(2) + "\n");
    return all_ok ? kOk : kPartialFailure;
}

}  // namespace geora::cli
