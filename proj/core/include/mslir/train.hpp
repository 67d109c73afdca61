#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mslir/checkpoint.hpp"
#include "mslir/config.hpp"
#include "mslir/dataset.hpp"

namespace mslir {

struct LogRow {
    std::int64_t step = 0;
    double lr = 0;
    double loss = 0;
    double val_psnr = std::numeric_limits<double>::quiet_NaN();  // NaN between validations
};

struct TrainResult {
    std::vector<LogRow> log;
    Checkpoint final_checkpoint;  // last good state
    Checkpoint best_checkpoint;   // best validation PSNR; the final state without a validation set
    double best_val_psnr = -std::numeric_limits<double>::infinity();
    bool aborted = false;  // a non-finite loss or gradient stopped training
    std::string abort_reason;
    double wall_seconds = 0;
};

/// Single-sample Adam with cosine decay. Step t draws a training sample from
/// a generator seeded with `seed`, uses lr = cosine_lr(lr0, t, steps) and
/// logs the loss before the update. Every `eval_every` steps and after the
/// last one, the mean validation PSNR is logged and the best parameters kept.
/// Parameters missing from `params` are created by the scheme build, so
/// the store's own seed fixes the initialisation; `params` ends at the last
/// good state.
TrainResult train(const Scheme& scheme, const Dataset& data, const TrainConfig& cfg, std::uint64_t seed,
                  ParamStore<float>& params);

/// Reconstructs every sample of `samples`, reusing one inference graph.
std::vector<std::vector<float>> reconstruct_all(const Scheme& scheme, ParamStore<float>& params,
                                                std::span<const Sample> samples);

struct MetricSummary {
    std::size_t count = 0;
    double psnr_mean = 0, psnr_std = 0;
    double ssim_mean = 0, ssim_std = 0;
    std::vector<double> psnr, ssim;  // per sample
};

/// PSNR/SSIM of reconstructions against the truths; std is the sample
/// standard deviation (0 for one sample, or when all values are equal).
MetricSummary summarise(std::span<const std::vector<float>> recons, std::span<const Sample> samples, const Shape& shape);

/// Named reconstruction function for the robustness sweep.
struct Reconstructor {
    std::string name;
    std::function<std::vector<float>(std::span<const float>)> run;
};

struct RobustnessTable {
    std::vector<std::string> schemes;
    std::vector<double> levels;            // percent
    std::vector<std::vector<double>> psnr;  // [scheme][level], mean over samples
};

/// Adds relative Gaussian noise of each level (percent, on top of the
/// already noisy data) and records the mean PSNR per scheme. The noise draw
/// for (level, sample) is shared by all schemes.
RobustnessTable robustness_sweep(std::span<const Sample> samples, std::span<const Reconstructor> schemes,
                                 std::span<const double> levels, std::uint64_t seed);

/// CSV writers; every table carries a config_hash column.
void write_log_csv(std::ostream& os, std::span<const LogRow> rows, const std::string& config_hash);
std::string format_double(double v);

}  // namespace mslir
