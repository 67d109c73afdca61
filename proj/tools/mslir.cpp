#include <cmath>
#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mslir/commands.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
};

mslir::RunConfig resolve(const Options& o) {
    mslir::RunConfig cfg = mslir::load_run_config(o.config);
    if (o.out) cfg.output_dir = *o.out;
    if (o.seed) cfg.seed = *o.seed;
    return cfg;
}

int run(const std::string& cmd, const mslir::RunConfig& cfg) {
    using namespace mslir;
    std::cout << "config_hash " << config_hash(cfg) << "\n";
    if (cmd == "simulate") {
        std::cout << "dataset " << cmd_simulate(cfg).string() << "\n";
    } else if (cmd == "train") {
        const TrainResult r = cmd_train(cfg);
        std::cout << "steps " << r.final_checkpoint.step << "\n";
        if (!r.log.empty()) std::cout << "final_loss " << format_double(r.log.back().loss) << "\n";
        std::cout << "best_val_psnr " << format_double(r.best_val_psnr) << "\n";
        std::cout << "train_seconds " << format_double(r.wall_seconds) << "\n";
        if (r.aborted) {
            std::cerr << "mslir: training aborted, last good checkpoint kept: " << r.abort_reason << "\n";
            return 3;
        }
    } else if (cmd == "reconstruct") {
        std::cout << "image " << cmd_reconstruct(cfg).string() << "\n";
    } else if (cmd == "evaluate") {
        const MetricSummary m = cmd_evaluate(cfg);
        std::cout << "psnr " << format_double(m.psnr_mean) << " +- " << format_double(m.psnr_std) << "\n";
        std::cout << "ssim " << format_double(m.ssim_mean) << " +- " << format_double(m.ssim_std) << "\n";
    } else if (cmd == "bench-scaling") {
        std::cout << "resources " << cmd_bench_scaling(cfg).string() << "\n";
    } else if (cmd == "robustness") {
        const RobustnessTable t = cmd_robustness(cfg);
        for (std::size_t s = 0; s < t.schemes.size(); ++s) {
            std::cout << t.schemes[s];
            for (double v : t.psnr[s]) std::cout << ' ' << format_double(v);
            std::cout << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-scale learned iterative reconstruction"};
    app.require_subcommand(1);
    Options opts;
    const char* commands[][2] = {
        {"simulate", "Generate phantoms and noisy data"},
        {"train", "Train the configured scheme"},
        {"reconstruct", "Reconstruct one data file"},
        {"evaluate", "PSNR/SSIM on the test split"},
        {"bench-scaling", "Memory and operator counts over grid sizes"},
        {"robustness", "PSNR under additional Gaussian noise"},
    };
    for (auto& c : commands) {
        auto* sub = app.add_subcommand(c[0], c[1]);
        sub->add_option("--config", opts.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out, "Output directory (overrides output_dir)");
        sub->add_option("--seed", opts.seed, "Run seed (overrides seed)");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        return run(cmd, resolve(opts));
    } catch (const std::exception& e) {
        std::cerr << "mslir " << cmd << ": " << e.what() << "\n";
        return 1;
    }
}
