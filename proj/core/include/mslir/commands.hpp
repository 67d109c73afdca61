#pragma once

#include <filesystem>
#include <string>

#include "mslir/config.hpp"
#include "mslir/train.hpp"

namespace mslir {

/// The `mslir` subcommands as library calls. Each writes under
/// cfg.output_dir, records its files in <output_dir>/manifest.json and holds
/// an exclusive lock on <output_dir>/.lock while running. Outputs depend only
/// on the configuration, except the timing columns noted per command.

/// Generates the dataset into cfg.dataset_dir().
std::filesystem::path cmd_simulate(const RunConfig& cfg);

/// Trains cfg.scheme on the dataset. Writes the final checkpoint to
/// cfg.checkpoint_path(), best.mslr, train_log.csv and run_config.json.
TrainResult cmd_train(const RunConfig& cfg);

/// Reconstructs cfg.reconstruct.input to recon.raw (+ sidecar) and recon.pgm.
std::filesystem::path cmd_reconstruct(const RunConfig& cfg);

/// Test-split metrics: metrics.csv (mean and std) and metrics_samples.csv.
MetricSummary cmd_evaluate(const RunConfig& cfg);

/// resources.csv: scheme, n, peak_bytes, finest_op_calls, wall_ms (wall_ms is
/// a timing and varies between runs).
std::filesystem::path cmd_bench_scaling(const RunConfig& cfg);

/// robustness.csv: mean test PSNR per (scheme, additional noise level).
RobustnessTable cmd_robustness(const RunConfig& cfg);

/// Scheme on the configured geometry, with parameters from `checkpoint`
/// (optional for fbp when the file does not exist).
Scheme make_scheme(const RunConfig& cfg, const SchemeConfig& scheme);
void load_params(const Scheme& scheme, const std::filesystem::path& checkpoint, ParamStore<float>& params);

/// Seed streams derived from the run seed.
std::uint64_t init_seed(const RunConfig& cfg);
std::uint64_t sampling_seed(const RunConfig& cfg);

}  // namespace mslir
