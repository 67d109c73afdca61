#include "mslir/grid.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mslir {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

GridSpec GridSpec::centered(Shape shape, std::vector<double> spacing) {
    GridSpec g{std::move(shape), std::move(spacing), {}};
    g.validate();
    g.origin.resize(g.shape.size());
    for (int a = 0; a < g.ndim(); ++a) g.origin[a] = -0.5 * g.extent(a);
    return g;
}

GridSpec GridSpec::coarsened(std::int64_t factor) const {
    GridSpec g = *this;
    for (int a = 0; a < ndim(); ++a) {
        if (shape[a] % factor != 0) {
            throw std::invalid_argument("grid axis " + std::to_string(a) + " of length " +
                                        std::to_string(shape[a]) + " is not divisible by " +
                                        std::to_string(factor));
        }
        g.shape[a] = shape[a] / factor;
        g.spacing[a] = spacing[a] * static_cast<double>(factor);
    }
    return g;
}

void GridSpec::validate() const {
    if (ndim() != 2 && ndim() != 3) throw std::invalid_argument("grid must have 2 or 3 axes");
    if (spacing.size() != shape.size()) throw std::invalid_argument("grid spacing rank mismatch");
    if (!origin.empty() && origin.size() != shape.size())
        throw std::invalid_argument("grid origin rank mismatch");
    for (int a = 0; a < ndim(); ++a) {
        if (shape[a] < 1) throw std::invalid_argument("grid axis " + std::to_string(a) + " has no cells");
        if (!(spacing[a] > 0.0))
            throw std::invalid_argument("grid axis " + std::to_string(a) + " has non-positive spacing");
    }
}

std::vector<double> uniform_angles(std::int64_t n) {
    std::vector<double> a(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k)
        a[k] = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    return a;
}

Shape data_shape(const Geometry& geometry) {
    if (const auto* fan = std::get_if<FanBeamGeometry>(&geometry)) return {fan->n_angles(), fan->n_det};
    const auto& cone = std::get<ConeBeamGeometry>(geometry);
    return {cone.n_angles(), cone.det_rows, cone.det_cols};
}

int geometry_ndim(const Geometry& geometry) {
    return std::holds_alternative<FanBeamGeometry>(geometry) ? 2 : 3;
}

DetectorPoint project_point(double sad, double sdd, double angle, const std::array<double, 3>& x) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double depth = sad - (c * x[0] + s * x[1]);
    const double mag = sdd / depth;
    return {mag * (-s * x[0] + c * x[1]), mag * x[2]};
}

namespace {

// Corners in physical (x, y, z) order.
std::vector<std::array<double, 3>> corners(const GridSpec& grid) {
    const int nd = grid.ndim();
    const double x0 = grid.origin[nd - 1], x1 = x0 + grid.extent(nd - 1);
    const double y0 = grid.origin[nd - 2], y1 = y0 + grid.extent(nd - 2);
    double z0 = 0.0, z1 = 0.0;
    if (nd == 3) {
        z0 = grid.origin[0];
        z1 = z0 + grid.extent(0);
    }
    std::vector<std::array<double, 3>> out;
    for (double x : {x0, x1})
        for (double y : {y0, y1})
            for (double z : {z0, z1}) out.push_back({x, y, z});
    return out;
}

double inplane_radius(const GridSpec& grid) {
    double r = 0.0;
    for (const auto& p : corners(grid)) r = std::max(r, std::hypot(p[0], p[1]));
    return r;
}

}  // namespace

bool covers(const GridSpec& grid, const Geometry& geometry) {
    constexpr double tol = 1e-9;
    return std::visit(
        [&](const auto& geo) {
            using G = std::decay_t<decltype(geo)>;
            const double sad = geo.source_axis_dist;
            const double sdd = geo.source_detector_dist();
            if (inplane_radius(grid) >= sad) return false;
            double half_u = 0.0, half_v = 0.0;
            if constexpr (std::is_same_v<G, FanBeamGeometry>) {
                half_u = 0.5 * static_cast<double>(geo.n_det) * geo.det_spacing;
                half_v = 0.0;
            } else {
                half_u = 0.5 * static_cast<double>(geo.det_cols) * geo.det_spacing_col;
                half_v = 0.5 * static_cast<double>(geo.det_rows) * geo.det_spacing_row;
            }
            for (double angle : geo.angles) {
                for (const auto& p : corners(grid)) {
                    const auto d = project_point(sad, sdd, angle, p);
                    if (std::abs(d.u) > half_u + tol) return false;
                    if (std::abs(d.v) > half_v + tol) return false;
                }
            }
            return true;
        },
        geometry);
}

std::int64_t covering_detector_count(const GridSpec& grid, double sad, double sdd, double det_spacing) {
    const double r = inplane_radius(grid);
    if (r >= sad) throw std::invalid_argument("grid reaches the source circle");
    const double u_max = sdd * r / std::sqrt(sad * sad - r * r);
    return 2 * static_cast<std::int64_t>(std::ceil(u_max / det_spacing - 1e-12));
}

FanBeamGeometry make_fan_geometry(const GridSpec& grid, std::int64_t n_angles, double sad, double add) {
    if (grid.ndim() != 2) throw std::invalid_argument("fan geometry needs a 2D grid");
    FanBeamGeometry geo;
    geo.source_axis_dist = sad;
    geo.axis_detector_dist = add;
    geo.angles = uniform_angles(n_angles);
    geo.det_spacing = grid.spacing[1] * geo.source_detector_dist() / sad;
    geo.n_det = covering_detector_count(grid, sad, geo.source_detector_dist(), geo.det_spacing);
    return geo;
}

ConeBeamGeometry make_cone_geometry(const GridSpec& grid, std::int64_t n_angles, double sad, double add) {
    if (grid.ndim() != 3) throw std::invalid_argument("cone geometry needs a 3D grid");
    ConeBeamGeometry geo;
    geo.source_axis_dist = sad;
    geo.axis_detector_dist = add;
    geo.angles = uniform_angles(n_angles);
    const double sdd = geo.source_detector_dist();
    const double mag = sdd / sad;
    geo.det_spacing_col = grid.spacing[2] * mag;
    geo.det_spacing_row = grid.spacing[0] * mag;
    geo.det_cols = covering_detector_count(grid, sad, sdd, geo.det_spacing_col);
    const double r = inplane_radius(grid);
    const double half_z = 0.5 * grid.extent(0);
    const double v_max = sdd * half_z / (sad - r);
    geo.det_rows = 2 * static_cast<std::int64_t>(std::ceil(v_max / geo.det_spacing_row - 1e-12));
    return geo;
}

void validate(const GridSpec& grid, const Geometry& geometry) {
    grid.validate();
    if (grid.ndim() != geometry_ndim(geometry))
        throw std::invalid_argument("grid and geometry dimensions differ");
    std::visit(
        [](const auto& geo) {
            if (!(geo.source_axis_dist > 0.0)) throw std::invalid_argument("source_axis_dist must be > 0");
            if (!(geo.axis_detector_dist >= 0.0)) throw std::invalid_argument("axis_detector_dist must be >= 0");
            if (geo.angles.empty()) throw std::invalid_argument("geometry has no angles");
        },
        geometry);
    if (const auto* fan = std::get_if<FanBeamGeometry>(&geometry)) {
        if (fan->n_det < 1 || !(fan->det_spacing > 0.0)) throw std::invalid_argument("invalid fan detector");
    } else {
        const auto& cone = std::get<ConeBeamGeometry>(geometry);
        if (cone.det_rows < 1 || cone.det_cols < 1 || !(cone.det_spacing_row > 0.0) ||
            !(cone.det_spacing_col > 0.0))
            throw std::invalid_argument("invalid cone detector");
    }
    if (!covers(grid, geometry))
        throw std::invalid_argument("detector does not cover the image grid at every angle");
}

}  // namespace mslir
