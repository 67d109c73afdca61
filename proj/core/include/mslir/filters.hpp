#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "mslir/grid.hpp"
#include "mslir/ray_transform.hpp"
#include "mslir/sequence.hpp"

namespace mslir {

enum class FilterWindow { ram_lak, hann };

FilterWindow parse_filter_window(std::string_view name);
std::string_view to_string(FilterWindow window);

struct FilterSpec {
    FilterWindow window = FilterWindow::hann;
    double frequency_scaling = 1.0;  // support ends at this fraction of Nyquist, in (0, 1]

    void validate() const;
    bool operator==(const FilterSpec&) const = default;
};

/// Smallest power of two that is at least twice `n`.
std::int64_t padded_length(std::int64_t n);

/// Real-to-complex frequency response (`padded/2 + 1` bins) of the apodized
/// ramp for detector spacing `spacing` (mm): |nu| * window(nu / (h * Nyquist)),
/// zero above h * Nyquist.
std::vector<double> frequency_response(std::int64_t padded, double spacing, const FilterSpec& spec);

/// Circular filtering of contiguous rows of length `row_length` with a
/// response of `row_length/2 + 1` bins.
template <class T>
void apply_row_filter(std::span<T> rows, std::int64_t row_length, std::span<const double> response);

/// Ramp-filters every detector row of `data` (last axis of `shape`) with
/// zero padding to padded_length(n).
template <class T>
std::vector<T> filter_sinogram(std::span<const T> data, const Shape& shape, double spacing, const FilterSpec& spec);

/// Filtered backprojection A-dagger: fan-beam FBP on flat detectors in 2D
/// and FDK in 3D.
///
/// Steps: cosine pre-weighting, row-wise ramp filtering (detector coordinates
/// rescaled to the rotation axis), then backprojection with inverse-square
/// distance weights and angular step 2pi / n_angles. Linear, with an exact
/// transpose.
class FilteredBackprojection {
public:
    FilteredBackprojection(GridSpec grid, Geometry geometry, FilterSpec spec);
    ~FilteredBackprojection();
    FilteredBackprojection(const FilteredBackprojection&) = delete;
    FilteredBackprojection& operator=(const FilteredBackprojection&) = delete;

    const GridSpec& grid() const { return grid_; }
    const Geometry& geometry() const { return geometry_; }
    const FilterSpec& spec() const { return spec_; }
    std::int64_t image_size() const { return grid_.size(); }
    std::int64_t data_size() const { return numel(data_shape_); }
    Shape data_shape() const { return data_shape_; }

    template <class T>
    void apply(std::span<const T> data, std::span<T> image) const;
    template <class T>
    void transpose(std::span<const T> image, std::span<T> data) const;

    template <class T>
    std::vector<T> apply(std::span<const T> data) const;
    template <class T>
    std::vector<T> transpose(std::span<const T> image) const;

    /// Backprojection samples per evaluation (voxels x views).
    std::uint64_t cost() const;

private:
    struct Fft;

    void filter_rows(std::vector<double>& rows) const;
    // Continuous detector index and 1/U^2 weight of a voxel centre at view a.
    void voxel_projection(std::size_t a, const double x[3], double& col, double& row, double& weight) const;

    GridSpec grid_;
    Geometry geometry_;
    FilterSpec spec_;
    Shape data_shape_;
    int ndim_;
    std::int64_t n_views_ = 0, n_rows_ = 1, n_cols_ = 0, padded_ = 0;
    double sad_ = 0, sdd_ = 0, du_ = 1, dv_ = 1, dbeta_ = 0;
    std::vector<double> cos_, sin_;
    std::vector<double> preweight_;  // per (row, col), includes the 1/2 factor
    std::vector<double> response_;
    std::unique_ptr<Fft> fft_;
};

/// The scale-i pseudo-inverse A-dagger_i.
std::unique_ptr<FilteredBackprojection> make_pseudo_inverse(const DiscretisationSequence& seq, int i,
                                                            const FilterSpec& spec);

/// grad-dagger D_i(f; g) = A-dagger_i (A_i f - pi_i g), with g on the finest data space.
template <class T>
std::vector<T> filtered_grad_data_fit(std::span<const T> image, std::span<const T> finest_data,
                                      const DiscretisationSequence& seq, int i, const FilterSpec& spec);

}  // namespace mslir
