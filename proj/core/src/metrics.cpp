#include "mslir/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mslir {

namespace {

void check_sizes(std::span<const float> x, std::span<const float> ref) {
    if (x.size() != ref.size() || x.empty())
        throw std::invalid_argument("metric: images differ in size (" + std::to_string(x.size()) + " vs " +
                                    std::to_string(ref.size()) + ")");
}

double value_range(std::span<const float> ref) {
    const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
    return static_cast<double>(*hi) - static_cast<double>(*lo);
}

// Valid-mode separable filtering of a row-major array along every axis.
std::vector<double> filter_valid(std::vector<double> a, Shape shape, const std::vector<double>& w) {
    const std::int64_t k = static_cast<std::int64_t>(w.size());
    for (std::size_t axis = 0; axis < shape.size(); ++axis) {
        std::int64_t outer = 1, inner = 1;
        for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
        for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
        const std::int64_t n = shape[axis], m = n - k + 1;
        std::vector<double> out(static_cast<std::size_t>(outer * m * inner), 0.0);
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t j = 0; j < m; ++j) {
                double* dst = out.data() + (o * m + j) * inner;
                for (std::int64_t t = 0; t < k; ++t) {
                    const double* src = a.data() + (o * n + j + t) * inner;
                    const double wt = w[static_cast<std::size_t>(t)];
                    for (std::int64_t i = 0; i < inner; ++i) dst[i] += wt * src[i];
                }
            }
        a = std::move(out);
        shape[axis] = m;
    }
    return a;
}

}  // namespace

double psnr(std::span<const float> x, std::span<const float> ref) {
    check_sizes(x, ref);
    double mse = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = static_cast<double>(x[k]) - static_cast<double>(ref[k]);
        mse += d * d;
    }
    mse /= static_cast<double>(x.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    const double r = value_range(ref);
    return 10.0 * std::log10(r * r / mse);
}

double ssim(std::span<const float> x, std::span<const float> ref, const Shape& shape, const SsimOptions& opt) {
    check_sizes(x, ref);
    if (numel(shape) != static_cast<std::int64_t>(x.size()))
        throw std::invalid_argument("ssim: shape " + to_string(shape) + " does not match the data");
    for (auto n : shape)
        if (n < opt.window) throw std::invalid_argument("ssim: image " + to_string(shape) + " smaller than the window");
    std::vector<double> w(static_cast<std::size_t>(opt.window));
    double sum = 0;
    for (int i = 0; i < opt.window; ++i) {
        const double t = i - (opt.window - 1) / 2.0;
        w[static_cast<std::size_t>(i)] = std::exp(-t * t / (2 * opt.sigma * opt.sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= sum;

    const std::size_t n = x.size();
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    for (std::size_t k = 0; k < n; ++k) {
        a[k] = x[k];
        b[k] = ref[k];
        aa[k] = a[k] * a[k];
        bb[k] = b[k] * b[k];
        ab[k] = a[k] * b[k];
    }
    const auto mu_a = filter_valid(a, shape, w), mu_b = filter_valid(b, shape, w);
    const auto s_aa = filter_valid(aa, shape, w), s_bb = filter_valid(bb, shape, w), s_ab = filter_valid(ab, shape, w);
    const double L = value_range(ref);
    const double c1 = (opt.k1 * L) * (opt.k1 * L), c2 = (opt.k2 * L) * (opt.k2 * L);
    double total = 0;
    for (std::size_t k = 0; k < mu_a.size(); ++k) {
        const double ma = mu_a[k], mb = mu_b[k];
        const double va = s_aa[k] - ma * ma, vb = s_bb[k] - mb * mb, cov = s_ab[k] - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

}  // namespace mslir
