#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mslir/grid.hpp"
#include "mslir/ray_transform.hpp"

namespace mslir {

/// splitmix64 of (base, stream, index); independent seeds for every draw.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

/// Random ellipse (2D) / ellipsoid (3D) phantoms. Geometry is in units of the
/// grid half-extent, so the same spec works at every resolution.
struct EllipsePhantomSpec {
    int min_count = 4;
    int max_count = 12;
    double max_center = 0.6;  // |centre| bound per axis
    double min_axis = 0.05;
    double max_axis = 0.45;
    double min_density = 0.1;
    double max_density = 0.6;
    double v_max = 1.0;   // values are clipped to [0, v_max]
    int supersample = 4;  // sub-samples per axis for edge coverage

    void validate() const;
    bool operator==(const EllipsePhantomSpec&) const = default;
};

struct Ellipse {
    double center[3] = {0, 0, 0};  // x, y, z in half-extent units
    double axes[3] = {1, 1, 1};
    double angle = 0;  // rotation about z, radians
    double density = 1;
};

std::vector<Ellipse> draw_ellipses(const EllipsePhantomSpec& spec, int ndim, std::uint64_t seed);

/// Sum of constant-density ellipses, each pixel weighted by its covered area
/// fraction (estimated on a supersample^d sub-grid), clipped to [0, v_max].
std::vector<float> rasterize(std::span<const Ellipse> ellipses, const GridSpec& grid, int supersample, double v_max);

std::vector<float> make_phantom(const EllipsePhantomSpec& spec, const GridSpec& grid, std::uint64_t seed);

/// g + sigma * N(0, 1) with sigma = level * mean|g|.
std::vector<float> add_gaussian(std::span<const float> g, double level, std::uint64_t seed);

struct LowDoseModel {
    double photons = 8000;  // N0
    double mu = 0.2;        // mass attenuation, cm^2/g
};

/// Expected counts N0 exp(-mu * p / 10) for line integrals p in density*mm.
std::vector<double> expected_counts(std::span<const double> line_integrals, const LowDoseModel& model);

/// -log(max(c, 1) / N0) / mu, converted back to density*mm.
std::vector<double> linearise(std::span<const double> counts, const LowDoseModel& model);

/// Beer-Lambert data of f: Poisson counts (or their expectation when
/// `noiseless`), log-linearised. Negative f is rejected.
std::vector<float> simulate_lowdose(std::span<const float> f, const RayTransform& op, const LowDoseModel& model,
                                    std::uint64_t seed, bool noiseless = false);

// ---------------------------------------------------------------- raw volumes

enum class ElementType { u8, u16, i16, f32, f64 };
ElementType parse_element_type(std::string_view name);
std::string_view to_string(ElementType type);
std::size_t element_size(ElementType type);

enum class Endian { little, big };

struct RawVolume {
    GridSpec grid;
    std::vector<float> values;
};

/// Header-less binary plus a "<path>.meta" sidecar (key=value lines: shape,
/// spacing, origin, type, endian).
void save_raw_volume(const std::filesystem::path& path, const GridSpec& grid, std::span<const float> values,
                     ElementType type = ElementType::f32, Endian endian = Endian::little);

/// Reads the sidecar, then the binary.
RawVolume load_raw_volume(const std::filesystem::path& path);

/// Reads a binary of known layout; the grid gets unit spacing, centred.
RawVolume load_raw_volume(const std::filesystem::path& path, const Shape& shape, ElementType type, Endian endian);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace mslir
