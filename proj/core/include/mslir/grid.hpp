#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace mslir {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Regular image grid. Axes are stored in row-major order, so for a 2D grid
/// `shape = {ny, nx}` and for a 3D grid `shape = {nz, ny, nx}`; the last axis
/// is always the physical x axis.
struct GridSpec {
    Shape shape;
    std::vector<double> spacing;  // mm
    std::vector<double> origin;   // mm, physical coordinate of the grid corner

    /// Grid centred on the rotation axis.
    static GridSpec centered(Shape shape, std::vector<double> spacing);

    int ndim() const { return static_cast<int>(shape.size()); }
    std::int64_t size() const { return numel(shape); }
    double extent(int axis) const { return static_cast<double>(shape[axis]) * spacing[axis]; }

    /// Physical coordinate of cell centre `i` along row-major axis `axis`.
    double center(int axis, std::int64_t i) const {
        return origin[axis] + (static_cast<double>(i) + 0.5) * spacing[axis];
    }

    /// Same physical box, `factor` times fewer cells per axis.
    GridSpec coarsened(std::int64_t factor) const;

    /// Throws std::invalid_argument on non-positive counts or spacings.
    void validate() const;

    bool operator==(const GridSpec&) const = default;
};

/// 2D fan beam with a flat detector. Angle 0 places the source on +x.
struct FanBeamGeometry {
    double source_axis_dist = 500.0;    // mm
    double axis_detector_dist = 500.0;  // mm
    std::vector<double> angles;         // radians
    std::int64_t n_det = 0;
    double det_spacing = 1.0;  // mm

    std::int64_t n_angles() const { return static_cast<std::int64_t>(angles.size()); }
    double source_detector_dist() const { return source_axis_dist + axis_detector_dist; }
    bool operator==(const FanBeamGeometry&) const = default;
};

/// 3D circular cone beam with a flat detector; rotation about z.
struct ConeBeamGeometry {
    double source_axis_dist = 66.0;
    double axis_detector_dist = 133.0;
    std::vector<double> angles;
    std::int64_t det_rows = 0;  // along z
    std::int64_t det_cols = 0;  // in-plane
    double det_spacing_row = 1.0;
    double det_spacing_col = 1.0;

    std::int64_t n_angles() const { return static_cast<std::int64_t>(angles.size()); }
    double source_detector_dist() const { return source_axis_dist + axis_detector_dist; }
    bool operator==(const ConeBeamGeometry&) const = default;
};

using Geometry = std::variant<FanBeamGeometry, ConeBeamGeometry>;

/// `n` angles uniform over [0, 2pi).
std::vector<double> uniform_angles(std::int64_t n);

/// Data layout: fan {n_angles, n_det}; cone {n_angles, det_rows, det_cols}.
Shape data_shape(const Geometry& geometry);
int geometry_ndim(const Geometry& geometry);

/// True when every grid corner projects onto the detector at every angle.
bool covers(const GridSpec& grid, const Geometry& geometry);

/// Smallest even detector element count (per in-plane axis) that covers `grid`
/// for the given spacing; used by the geometry factories below.
std::int64_t covering_detector_count(const GridSpec& grid, double source_axis_dist,
                                     double source_detector_dist, double det_spacing);

/// Fan geometry whose detector spacing equals the magnified pixel size and
/// whose element count is the smallest even count that covers `grid`.
FanBeamGeometry make_fan_geometry(const GridSpec& grid, std::int64_t n_angles,
                                  double source_axis_dist = 500.0,
                                  double axis_detector_dist = 500.0);

ConeBeamGeometry make_cone_geometry(const GridSpec& grid, std::int64_t n_angles,
                                    double source_axis_dist, double axis_detector_dist);

/// Throws std::invalid_argument unless the geometry is well formed and covers `grid`.
void validate(const GridSpec& grid, const Geometry& geometry);

/// Projection of a physical point onto the (flat) detector at `angle`.
/// Returns {u, v}; v is zero in 2D.
struct DetectorPoint {
    double u;
    double v;
};
DetectorPoint project_point(double source_axis_dist, double source_detector_dist,
                            double angle, const std::array<double, 3>& x);

}  // namespace mslir
