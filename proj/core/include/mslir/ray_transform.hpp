#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mslir/grid.hpp"
#include "mslir/sequence.hpp"

namespace mslir {

/// Joseph-style ray transform for fan-beam (2D) and circular cone-beam (3D)
/// geometries.
///
/// Each ray is sampled once per slice of its dominant axis; the image is
/// (bi)linearly interpolated between neighbouring cell centres in the slice
/// and the sample is weighted by the ray length per slice. `adjoint` applies
/// exactly the transposed weights by scattering along the same rays into a
/// fixed number of per-block accumulators, so results are bit-reproducible
/// under any thread count.
///
/// Geometry bookkeeping is done in double precision; ray sums and
/// backprojections accumulate in double for both float and double data.
class RayTransform {
public:
    RayTransform(GridSpec grid, Geometry geometry);

    const GridSpec& grid() const { return grid_; }
    const Geometry& geometry() const { return geometry_; }
    Shape image_shape() const { return grid_.shape; }
    Shape data_shape() const { return data_shape_; }
    std::int64_t image_size() const { return grid_.size(); }
    std::int64_t data_size() const { return numel(data_shape_); }

    template <class T>
    void forward(std::span<const T> image, std::span<T> data) const;
    template <class T>
    void adjoint(std::span<const T> data, std::span<T> image) const;

    template <class T>
    std::vector<T> forward(std::span<const T> image) const;
    template <class T>
    std::vector<T> adjoint(std::span<const T> data) const;

    /// sum_j ||A e_j||^2, exact, from the sample weights.
    double squared_frobenius_norm() const;

    /// Interpolation samples per forward evaluation (rays x dominant-axis slices).
    std::uint64_t cost() const { return cost_; }

private:
    struct Ray {
        int main;          // physical axis of the dominant direction component (0=x, 1=y, 2=z)
        double alpha[2];   // continuous index of the two other axes at slice 0
        double beta[2];    // ... and their increment per slice
        double weight;     // ray length per slice
    };

    struct View {
        double cos_a, sin_a;
    };

    void build_rays();

    GridSpec grid_;
    Geometry geometry_;
    Shape data_shape_;
    int ndim_;
    std::int64_t n_[3] = {1, 1, 1};   // cells per physical axis
    double d_[3] = {1, 1, 1};         // spacing per physical axis
    double o_[3] = {0, 0, 0};         // origin per physical axis
    std::int64_t stride_[3] = {1, 1, 1};
    std::int64_t n_views_ = 0, n_rows_ = 1, n_cols_ = 0;
    double sad_ = 0, sdd_ = 0, du_ = 1, dv_ = 1;
    std::vector<View> views_;
    std::vector<Ray> rays_;  // view-major, then row, then column
    std::uint64_t cost_ = 0;
};

/// Data-fit gradient A*(A f - g) for an operator and data already on its space.
template <class T>
std::vector<T> grad_data_fit(const RayTransform& op, std::span<const T> image, std::span<const T> data);

/// grad D_i(f; g) = A_i*(A_i f - pi_i g) with g on the finest data space.
template <class T>
std::vector<T> grad_data_fit(std::span<const T> image, std::span<const T> finest_data,
                             const DiscretisationSequence& seq, int i);

}  // namespace mslir
