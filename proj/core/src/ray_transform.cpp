#include "mslir/ray_transform.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mslir/resample.hpp"

namespace mslir {

namespace {

constexpr int kOther[3][2] = {{1, 2}, {0, 2}, {0, 1}};
constexpr std::int64_t kAdjointBlocks = 4;

void check_size(std::size_t got, std::int64_t want, const char* what) {
    if (static_cast<std::int64_t>(got) != want) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch, expected " + std::to_string(want) +
                                    " values, got " + std::to_string(got));
    }
}

}  // namespace

RayTransform::RayTransform(GridSpec grid, Geometry geometry)
    : grid_(std::move(grid)), geometry_(std::move(geometry)) {
    if (grid_.origin.empty()) grid_ = GridSpec::centered(grid_.shape, grid_.spacing);
    validate(grid_, geometry_);
    ndim_ = grid_.ndim();
    data_shape_ = mslir::data_shape(geometry_);
    for (int p = 0; p < ndim_; ++p) {
        const int axis = ndim_ - 1 - p;
        n_[p] = grid_.shape[axis];
        d_[p] = grid_.spacing[axis];
        o_[p] = grid_.origin[axis];
    }
    stride_[0] = 1;
    stride_[1] = n_[0];
    stride_[2] = n_[0] * n_[1];

    std::visit(
        [&](const auto& geo) {
            sad_ = geo.source_axis_dist;
            sdd_ = geo.source_detector_dist();
            n_views_ = geo.n_angles();
            for (double a : geo.angles) views_.push_back({std::cos(a), std::sin(a)});
        },
        geometry_);
    if (const auto* fan = std::get_if<FanBeamGeometry>(&geometry_)) {
        n_rows_ = 1;
        n_cols_ = fan->n_det;
        du_ = fan->det_spacing;
        dv_ = 1.0;
    } else {
        const auto& cone = std::get<ConeBeamGeometry>(geometry_);
        n_rows_ = cone.det_rows;
        n_cols_ = cone.det_cols;
        du_ = cone.det_spacing_col;
        dv_ = cone.det_spacing_row;
    }
    build_rays();
}

void RayTransform::build_rays() {
    rays_.resize(static_cast<std::size_t>(n_views_ * n_rows_ * n_cols_));
    const double add = sdd_ - sad_;
    cost_ = 0;
    for (std::int64_t a = 0; a < n_views_; ++a) {
        const double c = views_[a].cos_a, s = views_[a].sin_a;
        const double src[3] = {sad_ * c, sad_ * s, 0.0};
        for (std::int64_t r = 0; r < n_rows_; ++r) {
            const double v = ndim_ == 3 ? (static_cast<double>(r) - 0.5 * static_cast<double>(n_rows_ - 1)) * dv_ : 0.0;
            for (std::int64_t k = 0; k < n_cols_; ++k) {
                const double u = (static_cast<double>(k) - 0.5 * static_cast<double>(n_cols_ - 1)) * du_;
                const double det[3] = {-add * c - u * s, -add * s + u * c, v};
                const double dir[3] = {det[0] - src[0], det[1] - src[1], det[2] - src[2]};
                int main = 0;
                double best = -1.0;
                for (int p = 0; p < ndim_; ++p) {
                    const double score = std::abs(dir[p]) / d_[p];
                    if (score > best) {
                        best = score;
                        main = p;
                    }
                }
                Ray& ray = rays_[static_cast<std::size_t>((a * n_rows_ + r) * n_cols_ + k)];
                ray.main = main;
                const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
                const double t0 = (o_[main] + 0.5 * d_[main] - src[main]) / dir[main];
                const double dt = d_[main] / dir[main];
                for (int j = 0; j < 2; ++j) {
                    const int b = kOther[main][j];
                    if (b >= ndim_) {
                        ray.alpha[j] = 0.0;
                        ray.beta[j] = 0.0;
                        continue;
                    }
                    ray.alpha[j] = (src[b] + t0 * dir[b] - o_[b]) / d_[b] - 0.5;
                    ray.beta[j] = dt * dir[b] / d_[b];
                }
                ray.weight = d_[main] * len / std::abs(dir[main]);
                cost_ += static_cast<std::uint64_t>(n_[main]);
            }
        }
    }
}

double RayTransform::squared_frobenius_norm() const {
    // Each sample touches distinct cells, so sum_j ||A e_j||^2 is the sum of
    // the squared sample weights.
    double total = 0.0;
    for (const Ray& ray : rays_) {
        const int a = ray.main;
        const std::int64_t nb = n_[kOther[a][0]], nc = n_[kOther[a][1]];
        double acc = 0.0;
        for (std::int64_t m = 0; m < n_[a]; ++m) {
            const double qb = ray.alpha[0] + ray.beta[0] * static_cast<double>(m);
            const double fb = std::floor(qb);
            const std::int64_t ib = static_cast<std::int64_t>(fb);
            if (ib < -1 || ib >= nb) continue;
            const double wb = qb - fb;
            const double sb = (ib >= 0 ? (1.0 - wb) * (1.0 - wb) : 0.0) + (ib + 1 < nb ? wb * wb : 0.0);
            if (ndim_ == 2) {
                acc += sb;
                continue;
            }
            const double qc = ray.alpha[1] + ray.beta[1] * static_cast<double>(m);
            const double fc = std::floor(qc);
            const std::int64_t ic = static_cast<std::int64_t>(fc);
            if (ic < -1 || ic >= nc) continue;
            const double wc = qc - fc;
            acc += sb * ((ic >= 0 ? (1.0 - wc) * (1.0 - wc) : 0.0) + (ic + 1 < nc ? wc * wc : 0.0));
        }
        total += ray.weight * ray.weight * acc;
    }
    return total;
}

template <class T>
void RayTransform::forward(std::span<const T> image, std::span<T> data) const {
    check_size(image.size(), image_size(), "RayTransform::forward image");
    check_size(data.size(), data_size(), "RayTransform::forward data");
    const std::int64_t n_rays = static_cast<std::int64_t>(rays_.size());
    const T* f = image.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t q = 0; q < n_rays; ++q) {
        const Ray& ray = rays_[static_cast<std::size_t>(q)];
        const int a = ray.main;
        const int b = kOther[a][0], c = kOther[a][1];
        const std::int64_t nb = n_[b], nc = n_[c];
        const std::int64_t sa = stride_[a], sb = stride_[b], sc = stride_[c];
        double acc = 0.0;
        for (std::int64_t m = 0; m < n_[a]; ++m) {
            const double qb = ray.alpha[0] + ray.beta[0] * static_cast<double>(m);
            const double fb = std::floor(qb);
            const std::int64_t ib = static_cast<std::int64_t>(fb);
            if (ib < -1 || ib >= nb) continue;
            const double wb = qb - fb;
            if (ndim_ == 2) {
                const T* row = f + m * sa;
                if (ib >= 0) acc += (1.0 - wb) * static_cast<double>(row[ib * sb]);
                if (ib + 1 < nb) acc += wb * static_cast<double>(row[(ib + 1) * sb]);
                continue;
            }
            const double qc = ray.alpha[1] + ray.beta[1] * static_cast<double>(m);
            const double fc = std::floor(qc);
            const std::int64_t ic = static_cast<std::int64_t>(fc);
            if (ic < -1 || ic >= nc) continue;
            const double wc = qc - fc;
            const T* slice = f + m * sa;
            for (int jb = 0; jb < 2; ++jb) {
                const std::int64_t xb = ib + jb;
                if (xb < 0 || xb >= nb) continue;
                const double w1 = jb ? wb : 1.0 - wb;
                for (int jc = 0; jc < 2; ++jc) {
                    const std::int64_t xc = ic + jc;
                    if (xc < 0 || xc >= nc) continue;
                    const double w2 = jc ? wc : 1.0 - wc;
                    acc += (w1 * w2) * static_cast<double>(slice[xb * sb + xc * sc]);
                }
            }
        }
        data[static_cast<std::size_t>(q)] = static_cast<T>(ray.weight * acc);
    }
}

template <class T>
void RayTransform::adjoint(std::span<const T> data, std::span<T> image) const {
    check_size(data.size(), data_size(), "RayTransform::adjoint data");
    check_size(image.size(), image_size(), "RayTransform::adjoint image");
    // Scatter along the same rays and weights as `forward`. Views are split
    // into a fixed number of blocks with private accumulators that are summed
    // in block order, so the result does not depend on the thread count.
    const std::int64_t n_vox = image_size();
    const std::int64_t rays_per_view = n_rows_ * n_cols_;
    const std::int64_t n_blocks = std::min<std::int64_t>(kAdjointBlocks, n_views_);
    std::vector<double> acc(static_cast<std::size_t>(n_blocks * n_vox), 0.0);
    const T* g = data.data();
#pragma omp parallel for schedule(static, 1)
    for (std::int64_t blk = 0; blk < n_blocks; ++blk) {
        double* out = acc.data() + blk * n_vox;
        const std::int64_t v0 = n_views_ * blk / n_blocks, v1 = n_views_ * (blk + 1) / n_blocks;
        for (std::int64_t q = v0 * rays_per_view; q < v1 * rays_per_view; ++q) {
            const Ray& ray = rays_[static_cast<std::size_t>(q)];
            const double val = ray.weight * static_cast<double>(g[q]);
            if (val == 0.0) continue;
            const int a = ray.main;
            const int b = kOther[a][0], c = kOther[a][1];
            const std::int64_t nb = n_[b], nc = n_[c];
            const std::int64_t sa = stride_[a], sb = stride_[b], sc = stride_[c];
            for (std::int64_t m = 0; m < n_[a]; ++m) {
                const double qb = ray.alpha[0] + ray.beta[0] * static_cast<double>(m);
                const double fb = std::floor(qb);
                const std::int64_t ib = static_cast<std::int64_t>(fb);
                if (ib < -1 || ib >= nb) continue;
                const double wb = qb - fb;
                if (ndim_ == 2) {
                    double* row = out + m * sa;
                    if (ib >= 0) row[ib * sb] += (1.0 - wb) * val;
                    if (ib + 1 < nb) row[(ib + 1) * sb] += wb * val;
                    continue;
                }
                const double qc = ray.alpha[1] + ray.beta[1] * static_cast<double>(m);
                const double fc = std::floor(qc);
                const std::int64_t ic = static_cast<std::int64_t>(fc);
                if (ic < -1 || ic >= nc) continue;
                const double wc = qc - fc;
                double* slice = out + m * sa;
                for (int jb = 0; jb < 2; ++jb) {
                    const std::int64_t xb = ib + jb;
                    if (xb < 0 || xb >= nb) continue;
                    const double w1 = jb ? wb : 1.0 - wb;
                    for (int jc = 0; jc < 2; ++jc) {
                        const std::int64_t xc = ic + jc;
                        if (xc < 0 || xc >= nc) continue;
                        const double w2 = jc ? wc : 1.0 - wc;
                        slice[xb * sb + xc * sc] += (w1 * w2) * val;
                    }
                }
            }
        }
    }
#pragma omp parallel for schedule(static)
    for (std::int64_t vox = 0; vox < n_vox; ++vox) {
        double sum = 0.0;
        for (std::int64_t blk = 0; blk < n_blocks; ++blk) sum += acc[static_cast<std::size_t>(blk * n_vox + vox)];
        image[static_cast<std::size_t>(vox)] = static_cast<T>(sum);
    }
}

template <class T>
std::vector<T> RayTransform::forward(std::span<const T> image) const {
    std::vector<T> out(static_cast<std::size_t>(data_size()));
    forward<T>(image, std::span<T>(out));
    return out;
}

template <class T>
std::vector<T> RayTransform::adjoint(std::span<const T> data) const {
    std::vector<T> out(static_cast<std::size_t>(image_size()));
    adjoint<T>(data, std::span<T>(out));
    return out;
}

template <class T>
std::vector<T> grad_data_fit(const RayTransform& op, std::span<const T> image, std::span<const T> data) {
    check_size(data.size(), op.data_size(), "grad_data_fit data");
    std::vector<T> residual = op.forward<T>(image);
    for (std::size_t k = 0; k < residual.size(); ++k) residual[k] -= data[k];
    return op.adjoint<T>(std::span<const T>(residual));
}

template <class T>
std::vector<T> grad_data_fit(std::span<const T> image, std::span<const T> finest_data,
                             const DiscretisationSequence& seq, int i) {
    const RayTransform op(seq[i].image, seq[i].geometry);
    const std::vector<T> gi = project_data<T>(finest_data, seq, i);
    return grad_data_fit<T>(op, image, std::span<const T>(gi));
}

#define MSLIR_INSTANTIATE(T)                                                                               \
    template void RayTransform::forward<T>(std::span<const T>, std::span<T>) const;                        \
    template void RayTransform::adjoint<T>(std::span<const T>, std::span<T>) const;                        \
    template std::vector<T> RayTransform::forward<T>(std::span<const T>) const;                            \
    template std::vector<T> RayTransform::adjoint<T>(std::span<const T>) const;                            \
    template std::vector<T> grad_data_fit<T>(const RayTransform&, std::span<const T>, std::span<const T>); \
    template std::vector<T> grad_data_fit<T>(std::span<const T>, std::span<const T>,                       \
                                             const DiscretisationSequence&, int);
MSLIR_INSTANTIATE(float)
MSLIR_INSTANTIATE(double)
#undef MSLIR_INSTANTIATE

}  // namespace mslir
