// Command-line front end: init, diagnose, spectrum, train, compare.

#include "geora/cli/commands.hpp"
#include "geora/io/manifest.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace geora;
using namespace geora::cli;

int run(int argc, char** argv) {
    CLI::App app{"Geometry-aware low-rank adapters: init, diagnostics and toy training"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    std::string config;
    std::string out = ".";
    app.add_option("--config", config, "Run config file (key = value per line)")->check(CLI::ExistingFile);
    app.add_option("--set", g.overrides, "Config override key=value (repeatable)");
    app.add_option("--seed", g.seed, "Base seed");
    app.add_option("--out", out, "Output directory");
    app.add_option("--threads", g.threads, "Worker threads for per-layer work")->check(CLI::PositiveNumber);
    app.add_flag("--f32", g.f32, "Write arrays as 32-bit floats");

    std::string weights_dir;
    auto* init = app.add_subcommand("init", "Build adapters for every *.npy in a directory");
    init->add_option("weights", weights_dir, "Directory of weight matrices")->required()->check(CLI::ExistingDirectory);

    DiagnoseOptions diag;
    std::string diag_before, diag_after, diag_report;
    Index diag_head = 0, diag_tail = 0;
    auto* diagnose = app.add_subcommand("diagnose", "Spectral shift and alignment of an update");
    diagnose->add_option("before", diag_before, "Reference weights directory")->required()->check(CLI::ExistingDirectory);
    diagnose->add_option("after", diag_after, "Tuned weights or init output directory")->required()->check(CLI::ExistingDirectory);
    auto* report_opt = diagnose->add_option("--report", diag_report, "Report path (default <out>/diagnostics.json)");
    auto* head_opt = diagnose->add_option("--head", diag_head, "Head direction count")->check(CLI::NonNegativeNumber);
    auto* tail_opt = diagnose->add_option("--tail", diag_tail, "Tail direction count")->check(CLI::NonNegativeNumber);

    std::vector<std::string> spec_inputs;
    std::string spec_csv;
    Index spec_rank = 0;
    double spec_rho = 0.0;
    auto* spectrum = app.add_subcommand("spectrum", "Singular value curves of W, W_Geo and noise baselines");
    spectrum->add_option("inputs", spec_inputs, "Weight matrices")->required()->check(CLI::ExistingFile);
    auto* rank_opt = spectrum->add_option("--rank", spec_rank, "Mask rank and energy cutoff")->check(CLI::PositiveNumber);
    auto* rho_opt = spectrum->add_option("--rho", spec_rho, "Mask ratio")->check(CLI::Range(0.0, 1.0));
    auto* csv_opt = spectrum->add_option("--csv", spec_csv, "CSV path (default <out>/spectrum.csv)");

    TrainOptions train_opts;
    std::string train_weights;
    double kl_delta = 0.0;
    auto add_train_flags = [&](CLI::App* sub) {
        sub->add_option("--weights", train_weights, "Starting weight matrix (.npy)")->check(CLI::ExistingFile);
        sub->add_option("--target-shift", train_opts.target_shift, "Relative regression target shift")
            ->check(CLI::NonNegativeNumber);
        return sub->add_option("--kl-delta", kl_delta, "Trust-region bound to report against")
            ->check(CLI::PositiveNumber);
    };
    auto* train = app.add_subcommand("train", "Train one configuration on a toy task");
    auto* train_delta = add_train_flags(train);

    CompareOptions cmp;
    auto* compare = app.add_subcommand("compare", "Train a method x learning-rate grid");
    auto* compare_delta = add_train_flags(compare);
    compare->add_option("--methods", cmp.methods, "Methods (default: all, plus sparseft)")->delimiter(',');
    compare->add_option("--lrs", cmp.lrs, "Learning rates (default: config lr)")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (!config.empty()) {
        g.config = config;
    }
    g.out = out;

    if (init->parsed()) {
        return cmd_init(weights_dir, g, std::cerr);
    }
    if (diagnose->parsed()) {
        diag.before = diag_before;
        diag.after = diag_after;
        if (report_opt->count() > 0) diag.report = diag_report;
        if (head_opt->count() > 0) diag.head_count = diag_head;
        if (tail_opt->count() > 0) diag.tail_count = diag_tail;
        return cmd_diagnose(diag, g, std::cerr);
    }
    if (spectrum->parsed()) {
        SpectrumOptions so;
        so.inputs.assign(spec_inputs.begin(), spec_inputs.end());
        if (rank_opt->count() > 0) so.rank = spec_rank;
        if (rho_opt->count() > 0) so.rho = spec_rho;
        if (csv_opt->count() > 0) so.csv = spec_csv;
        return cmd_spectrum(so, g, std::cerr);
    }
    if (!train_weights.empty()) {
        train_opts.weights = train_weights;
    }
    if (train->parsed()) {
        if (train_delta->count() > 0) train_opts.kl_delta = kl_delta;
        return cmd_train(train_opts, g, std::cerr);
    }
    if (compare_delta->count() > 0) train_opts.kl_delta = kl_delta;
    cmp.base = train_opts;
    return cmd_compare(cmp, g, std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const geora::io::ConfigError& e) {
        std::cerr << "geora: config error: " << e.what() << "\n";
        return geora::cli::kConfigError;
    } catch (const geora::DomainError& e) {
        std::cerr << "geora: invalid input: " << e.what() << "\n";
        return geora::cli::kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "geora: " << e.what() << "\n";
        return geora::cli::kPartialFailure;
    }
}
