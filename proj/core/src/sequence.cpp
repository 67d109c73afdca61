#include "mslir/sequence.hpp"

#include <stdexcept>
#include <string>

namespace mslir {

ScalePolicy parse_scale_policy(std::string_view name) {
    if (name == "halve2d") return ScalePolicy::halve2d;
    if (name == "halve3d_scale0_equal") return ScalePolicy::halve3d_scale0_equal;
    if (name == "constant") return ScalePolicy::constant;
    throw std::invalid_argument("unknown scale policy '" + std::string(name) + "'");
}

std::string_view to_string(ScalePolicy policy) {
    switch (policy) {
        case ScalePolicy::halve2d: return "halve2d";
        case ScalePolicy::halve3d_scale0_equal: return "halve3d_scale0_equal";
        case ScalePolicy::constant: return "constant";
    }
    return "?";
}

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

void require_even(std::int64_t count, const char* axis) {
    if (count % 2 != 0) {
        throw std::invalid_argument(std::string("detector axis '") + axis + "' has odd length " +
                                    std::to_string(count) + "; coarsening needs an even element count");
    }
}

Geometry coarsen_geometry(const GridSpec& coarse_image, const Geometry& fine, std::int64_t det_factor,
                          std::int64_t angle_stride) {
    Geometry out = fine;
    if (auto* fan = std::get_if<FanBeamGeometry>(&out)) {
        const auto& f = std::get<FanBeamGeometry>(fine);
        if (angle_stride > 1) {
            fan->angles.clear();
            for (std::int64_t j = 0; j < f.n_angles(); j += angle_stride) fan->angles.push_back(f.angles[j]);
        }
        if (det_factor > 1) {
            require_even(f.n_det, "u");
            fan->det_spacing = f.det_spacing * static_cast<double>(det_factor);
            fan->n_det = ceil_div(f.n_det, det_factor);
            while (!covers(coarse_image, out)) ++fan->n_det;
        }
    } else {
        auto& cone = std::get<ConeBeamGeometry>(out);
        const auto& f = std::get<ConeBeamGeometry>(fine);
        if (angle_stride > 1) {
            cone.angles.clear();
            for (std::int64_t j = 0; j < f.n_angles(); j += angle_stride) cone.angles.push_back(f.angles[j]);
        }
        if (det_factor > 1) {
            require_even(f.det_rows, "v");
            require_even(f.det_cols, "u");
            cone.det_spacing_row = f.det_spacing_row * static_cast<double>(det_factor);
            cone.det_spacing_col = f.det_spacing_col * static_cast<double>(det_factor);
            cone.det_rows = ceil_div(f.det_rows, det_factor);
            cone.det_cols = ceil_div(f.det_cols, det_factor);
            while (!covers(coarse_image, out)) {
                ++cone.det_rows;
                ++cone.det_cols;
            }
        }
    }
    return out;
}

}  // namespace

DiscretisationSequence build_sequence(const GridSpec& final_image, const Geometry& final_geometry,
                                      int n_scales, ScalePolicy policy) {
    if (n_scales < 1) throw std::invalid_argument("n_scales must be >= 1");
    validate(final_image, final_geometry);
    const int nd = final_image.ndim();
    if (policy == ScalePolicy::halve2d && nd != 2)
        throw std::invalid_argument("policy halve2d needs a 2D geometry");
    if (policy == ScalePolicy::halve3d_scale0_equal && nd != 3)
        throw std::invalid_argument("policy halve3d_scale0_equal needs a 3D geometry");

    DiscretisationSequence seq;
    seq.policy = policy;
    seq.scales.resize(static_cast<std::size_t>(n_scales));
    for (int i = 0; i < n_scales; ++i) {
        int coarsenings = 0;
        switch (policy) {
            case ScalePolicy::halve2d: coarsenings = n_scales - 1 - i; break;
            case ScalePolicy::halve3d_scale0_equal: coarsenings = std::max(0, n_scales - 1 - std::max(i, 1)); break;
            case ScalePolicy::constant: coarsenings = 0; break;
        }
        const std::int64_t factor = std::int64_t{1} << coarsenings;
        Scale& s = seq.scales[static_cast<std::size_t>(i)];
        s.image_factor = factor;
        s.detector_factor = factor;
        s.angle_stride = policy == ScalePolicy::halve2d ? factor : 1;
        s.image = final_image.coarsened(factor);
        s.geometry = coarsen_geometry(s.image, final_geometry, s.detector_factor, s.angle_stride);
    }
    return seq;
}

}  // namespace mslir
