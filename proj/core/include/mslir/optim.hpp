#pragma once

#include <cstdint>
#include <vector>

#include "mslir/autodiff.hpp"

namespace mslir {

/// lr0 * (1 + cos(pi t / T)) / 2; lr0 at t = 0, exactly 0 at t = T.
double cosine_lr(double lr0, std::int64_t t, std::int64_t total);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool operator==(const AdamConfig&) const = default;
};

/// Adam with bias correction. Moments are kept per parameter in ParamStore
/// order and are part of the checkpoint.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore<float>& params, double lr);

    std::int64_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    std::vector<std::vector<float>>& first_moments() { return m_; }
    std::vector<std::vector<float>>& second_moments() { return v_; }
    const std::vector<std::vector<float>>& first_moments() const { return m_; }
    const std::vector<std::vector<float>>& second_moments() const { return v_; }
    void set_steps(std::int64_t t) { t_ = t; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace mslir
