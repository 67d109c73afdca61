#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mslir/grid.hpp"

namespace mslir {

enum class ScalePolicy {
    halve2d,               // halve image, detector and angle count per coarsening
    halve3d_scale0_equal,  // halve image and detector, keep angles; scale 0 repeats scale 1
    constant,              // every scale equals the finest space (full-resolution LGS)
};

ScalePolicy parse_scale_policy(std::string_view name);
std::string_view to_string(ScalePolicy policy);

/// One discretisation space S_i = X_i x Y_i together with how it relates to
/// the finest space.
struct Scale {
    GridSpec image;
    Geometry geometry;
    std::int64_t image_factor = 1;     // fine cells per coarse cell, per axis
    std::int64_t detector_factor = 1;  // fine detector elements per coarse element, per axis
    std::int64_t angle_stride = 1;     // coarse angle m is fine angle m * angle_stride
};

struct DiscretisationSequence {
    std::vector<Scale> scales;
    ScalePolicy policy = ScalePolicy::halve2d;

    int size() const { return static_cast<int>(scales.size()); }
    int finest_index() const { return size() - 1; }
    const Scale& operator[](int i) const { return scales.at(static_cast<std::size_t>(i)); }
    const Scale& finest() const { return scales.back(); }
    int ndim() const { return finest().image.ndim(); }
};

/// Builds S_0..S_N ending exactly in the given finest space.
DiscretisationSequence build_sequence(const GridSpec& final_image, const Geometry& final_geometry,
                                      int n_scales, ScalePolicy policy);

}  // namespace mslir
