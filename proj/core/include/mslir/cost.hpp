#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "mslir/schemes.hpp"

namespace mslir {

/// C_d = 1 / (1 - 2^-d): bound on the total cost of a halving sequence
/// relative to its finest scale.
double geometric_bound(int d);

struct CostModel {
    int ndim = 2;
    double shrink = 2.0;  // per-axis factor between consecutive scales
    int n_iterates = 5;
    SchemeKind kind = SchemeKind::ms_lgs;
};

struct CostPrediction {
    double finest = 0;            // one evaluation on the finest scale
    double multiscale_exact = 0;  // sum over the n_iterates scales of the sequence
    double multiscale_bound = 0;  // C_d * finest, with C_d for `shrink`
    double lgs = 0;               // n_iterates * finest
    double total = 0;             // the figure for `model.kind`
};

CostPrediction predict_cost(const CostModel& model, double finest_cost);

/// Ray-transform work of every forward A application in `trace`, relative
/// to one finest-scale application (interpolation-sample counts).
double measured_forward_cost_ratio(const Scheme& scheme, const TraceLog& trace);

struct ResourceReport {
    std::int64_t peak_bytes = 0;          // measured activation high-water mark of one training step
    std::int64_t planned_peak_bytes = 0;  // from the live-range analysis
    std::int64_t finest_op_calls = 0;     // finest-scale forward ray transforms per reconstruction
    double cost_ratio = 0;                // measured_forward_cost_ratio of one reconstruction
    double wall_ms = 0;                   // median of `repeats` warm training steps
};

/// Runs training steps (forward + backward, end-to-end loss) of `scheme` on
/// one sample and reports memory, operator counts and timing.
ResourceReport measure_resources(const Scheme& scheme, ParamStore<float>& params, std::span<const float> data,
                                 std::span<const float> truth, int repeats = 5);

}  // namespace mslir
