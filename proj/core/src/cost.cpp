#include "mslir/cost.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mslir {

double geometric_bound(int d) {
    if (d < 1) throw std::invalid_argument("geometric_bound: dimension must be positive");
    return 1.0 / (1.0 - std::ldexp(1.0, -d));
}

CostPrediction predict_cost(const CostModel& model, double finest_cost) {
    if (model.ndim < 1 || model.n_iterates < 1 || !(model.shrink > 1.0))
        throw std::invalid_argument("predict_cost: invalid cost model");
    CostPrediction p;
    p.finest = finest_cost;
    const double q = std::pow(model.shrink, -model.ndim);
    double term = finest_cost;
    for (int i = 0; i < model.n_iterates; ++i) {
        p.multiscale_exact += term;
        term *= q;
    }
    p.multiscale_bound = finest_cost / (1.0 - q);
    p.lgs = model.n_iterates * finest_cost;
    switch (model.kind) {
        case SchemeKind::fbp:
        case SchemeKind::unet_post: p.total = finest_cost; break;
        case SchemeKind::lgs: p.total = p.lgs; break;
        default: p.total = p.multiscale_exact; break;
    }
    return p;
}

double measured_forward_cost_ratio(const Scheme& scheme, const TraceLog& trace) {
    const auto& ops = scheme.operators();
    const double finest = static_cast<double>(ops.ray(scheme.sequence().finest_index()).cost());
    double total = 0;
    for (const auto& e : trace.entries())
        if (e.op == "A" && !e.transposed) total += static_cast<double>(ops.ray(e.scale).cost());
    return total / finest;
}

ResourceReport measure_resources(const Scheme& scheme, ParamStore<float>& params, std::span<const float> data,
                                 std::span<const float> truth, int repeats) {
    ResourceReport r;
    {
        TraceLog trace;
        scheme.reconstruct<float>(params, data, &trace);
        r.finest_op_calls = scheme.finest_forward_calls(trace);
        r.cost_ratio = scheme.sequence().size() > 0 ? measured_forward_cost_ratio(scheme, trace) : 0;
    }
    auto sg = scheme.build<float>(&params, LossMode::end_to_end);
    sg.graph->set_input(sg.data, data);
    sg.graph->set_input(sg.truth, truth);
    std::vector<double> times;
    for (int k = 0; k <= repeats; ++k) {  // first run is the warm-up
        params.zero_grad();
        const auto t0 = std::chrono::steady_clock::now();
        sg.graph->forward();
        sg.graph->backward(sg.loss);
        const auto t1 = std::chrono::steady_clock::now();
        if (k > 0) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        const auto m = sg.graph->memory();
        r.peak_bytes = std::max(r.peak_bytes, m.measured_peak_bytes);
        r.planned_peak_bytes = m.planned_peak_bytes;
    }
    params.zero_grad();
    if (!times.empty()) {
        std::sort(times.begin(), times.end());
        r.wall_ms = times[times.size() / 2];
    }
    return r;
}

}  // namespace mslir
