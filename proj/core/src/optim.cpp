#include "mslir/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mslir {

double cosine_lr(double lr0, std::int64_t t, std::int64_t total) {
    if (total <= 0) return lr0;
    if (t >= total) return 0.0;
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total)));
}

void Adam::step(ParamStore<float>& params, double lr) {
    if (m_.size() != params.size()) {
        if (!m_.empty()) throw std::logic_error("Adam: parameter set changed between steps");
        for (std::size_t p = 0; p < params.size(); ++p) {
            m_.emplace_back(params[p].value.size(), 0.0f);
            v_.emplace_back(params[p].value.size(), 0.0f);
        }
    }
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& prm = params[p];
        auto& m = m_[p];
        auto& v = v_[p];
        if (m.size() != prm.value.size()) throw std::logic_error("Adam: moment size mismatch for " + prm.name);
        for (std::size_t k = 0; k < m.size(); ++k) {
            const double g = prm.grad[k];
            const double mk = b1 * m[k] + (1 - b1) * g;
            const double vk = b2 * v[k] + (1 - b2) * g * g;
            m[k] = static_cast<float>(mk);
            v[k] = static_cast<float>(vk);
            const double update = lr * (mk / c1) / (std::sqrt(vk / c2) + cfg_.eps);
            prm.value[k] = static_cast<float>(prm.value[k] - update);
        }
    }
}

}  // namespace mslir
