#include "mslir/filters.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mslir/resample.hpp"

namespace mslir {

FilterWindow parse_filter_window(std::string_view name) {
    if (name == "hann") return FilterWindow::hann;
    if (name == "ram-lak" || name == "ram_lak") return FilterWindow::ram_lak;
    throw std::invalid_argument("unknown filter window '" + std::string(name) + "'");
}

std::string_view to_string(FilterWindow window) {
    return window == FilterWindow::hann ? "hann" : "ram-lak";
}

void FilterSpec::validate() const {
    if (!(frequency_scaling > 0.0 && frequency_scaling <= 1.0))
        throw std::invalid_argument("frequency_scaling must lie in (0, 1]");
}

std::int64_t padded_length(std::int64_t n) {
    std::int64_t p = 1;
    while (p < 2 * n) p <<= 1;
    return p;
}

std::vector<double> frequency_response(std::int64_t padded, double spacing, const FilterSpec& spec) {
    spec.validate();
    const std::int64_t bins = padded / 2 + 1;
    std::vector<double> h(static_cast<std::size_t>(bins));
    const double h_scale = spec.frequency_scaling;
    for (std::int64_t k = 0; k < bins; ++k) {
        const double nu = static_cast<double>(k) / (static_cast<double>(padded) * spacing);
        const double frac = 2.0 * static_cast<double>(k) / static_cast<double>(padded);  // of Nyquist
        double window = 0.0;
        if (frac <= h_scale) {
            window = spec.window == FilterWindow::hann ? 0.5 * (1.0 + std::cos(std::numbers::pi * frac / h_scale))
                                                       : 1.0;
        }
        h[static_cast<std::size_t>(k)] = nu * window;
    }
    return h;
}

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Real-to-complex / complex-to-real plan pair of one length. Execution uses
// the new-array interface so a plan may be shared between threads.
class RowFft {
public:
    explicit RowFft(std::int64_t n) : n_(n) {
        std::lock_guard lock(planner_mutex());
        double* in = fftw_alloc_real(static_cast<std::size_t>(n));
        fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
        r2c_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
        c2r_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), out, in, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
    }
    ~RowFft() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(r2c_);
        fftw_destroy_plan(c2r_);
    }
    RowFft(const RowFft&) = delete;
    RowFft& operator=(const RowFft&) = delete;

    std::int64_t size() const { return n_; }

    // buf holds n reals and is overwritten by the filtered signal.
    void filter(double* buf, fftw_complex* spec, std::span<const double> response) const {
        fftw_execute_dft_r2c(r2c_, buf, spec);
        const double norm = 1.0 / static_cast<double>(n_);
        for (std::int64_t k = 0; k <= n_ / 2; ++k) {
            const double s = response[static_cast<std::size_t>(k)] * norm;
            spec[k][0] *= s;
            spec[k][1] *= s;
        }
        fftw_execute_dft_c2r(c2r_, spec, buf);
    }

private:
    std::int64_t n_;
    fftw_plan r2c_ = nullptr;
    fftw_plan c2r_ = nullptr;
};

struct FftBuffers {
    double* real;
    fftw_complex* spec;
    explicit FftBuffers(std::int64_t n)
        : real(fftw_alloc_real(static_cast<std::size_t>(n))),
          spec(fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1))) {}
    ~FftBuffers() {
        fftw_free(real);
        fftw_free(spec);
    }
    FftBuffers(const FftBuffers&) = delete;
    FftBuffers& operator=(const FftBuffers&) = delete;
};

// Filters n_rows rows of `len` samples each, zero padded to fft.size().
void filter_padded_rows(const RowFft& fft, std::span<const double> response, double* rows, std::int64_t n_rows,
                        std::int64_t len) {
    const std::int64_t p = fft.size();
#pragma omp parallel
    {
        FftBuffers buf(p);
#pragma omp for schedule(static)
        for (std::int64_t r = 0; r < n_rows; ++r) {
            double* row = rows + r * len;
            std::copy(row, row + len, buf.real);
            std::fill(buf.real + len, buf.real + p, 0.0);
            fft.filter(buf.real, buf.spec, response);
            std::copy(buf.real, buf.real + len, row);
        }
    }
}

}  // namespace

template <class T>
void apply_row_filter(std::span<T> rows, std::int64_t row_length, std::span<const double> response) {
    if (row_length < 2 || rows.size() % static_cast<std::size_t>(row_length) != 0)
        throw std::invalid_argument("apply_row_filter: bad row length");
    if (static_cast<std::int64_t>(response.size()) != row_length / 2 + 1)
        throw std::invalid_argument("apply_row_filter: response has the wrong number of bins");
    const RowFft fft(row_length);
    std::vector<double> buf(rows.begin(), rows.end());
    filter_padded_rows(fft, response, buf.data(), static_cast<std::int64_t>(rows.size()) / row_length, row_length);
    std::transform(buf.begin(), buf.end(), rows.begin(), [](double v) { return static_cast<T>(v); });
}

template <class T>
std::vector<T> filter_sinogram(std::span<const T> data, const Shape& shape, double spacing, const FilterSpec& spec) {
    if (static_cast<std::int64_t>(data.size()) != numel(shape)) throw std::invalid_argument("filter_sinogram: shape mismatch");
    const std::int64_t n = shape.back();
    if (n < 2) throw std::invalid_argument("filter_sinogram: detector axis needs at least 2 elements");
    const std::int64_t p = padded_length(n);
    const std::vector<double> response = frequency_response(p, spacing, spec);
    const RowFft fft(p);
    std::vector<double> buf(data.begin(), data.end());
    filter_padded_rows(fft, response, buf.data(), numel(shape) / n, n);
    std::vector<T> out(buf.size());
    std::transform(buf.begin(), buf.end(), out.begin(), [](double v) { return static_cast<T>(v); });
    return out;
}

struct FilteredBackprojection::Fft {
    explicit Fft(std::int64_t n) : rows(n) {}
    RowFft rows;
};

FilteredBackprojection::FilteredBackprojection(GridSpec grid, Geometry geometry, FilterSpec spec)
    : grid_(std::move(grid)), geometry_(std::move(geometry)), spec_(spec) {
    if (grid_.origin.empty()) grid_ = GridSpec::centered(grid_.shape, grid_.spacing);
    validate(grid_, geometry_);
    spec_.validate();
    ndim_ = grid_.ndim();
    data_shape_ = mslir::data_shape(geometry_);
    std::visit(
        [&](const auto& geo) {
            sad_ = geo.source_axis_dist;
            sdd_ = geo.source_detector_dist();
            n_views_ = geo.n_angles();
            for (double a : geo.angles) {
                cos_.push_back(std::cos(a));
                sin_.push_back(std::sin(a));
            }
        },
        geometry_);
    if (const auto* fan = std::get_if<FanBeamGeometry>(&geometry_)) {
        n_cols_ = fan->n_det;
        du_ = fan->det_spacing;
    } else {
        const auto& cone = std::get<ConeBeamGeometry>(geometry_);
        n_rows_ = cone.det_rows;
        n_cols_ = cone.det_cols;
        du_ = cone.det_spacing_col;
        dv_ = cone.det_spacing_row;
    }
    if (n_cols_ < 2) throw std::invalid_argument("filtered backprojection needs at least 2 detector columns");
    dbeta_ = 2.0 * std::numbers::pi / static_cast<double>(n_views_);

    // Detector coordinates rescaled to the rotation axis.
    const double scale = sad_ / sdd_;
    preweight_.resize(static_cast<std::size_t>(n_rows_ * n_cols_));
    for (std::int64_t r = 0; r < n_rows_; ++r) {
        const double v = ndim_ == 3 ? (static_cast<double>(r) - 0.5 * static_cast<double>(n_rows_ - 1)) * dv_ * scale : 0.0;
        for (std::int64_t k = 0; k < n_cols_; ++k) {
            const double u = (static_cast<double>(k) - 0.5 * static_cast<double>(n_cols_ - 1)) * du_ * scale;
            preweight_[static_cast<std::size_t>(r * n_cols_ + k)] = 0.5 * sad_ / std::sqrt(sad_ * sad_ + u * u + v * v);
        }
    }
    padded_ = padded_length(n_cols_);
    response_ = frequency_response(padded_, du_ * scale, spec_);
    fft_ = std::make_unique<Fft>(padded_);
}

FilteredBackprojection::~FilteredBackprojection() = default;

std::uint64_t FilteredBackprojection::cost() const {
    return static_cast<std::uint64_t>(image_size()) * static_cast<std::uint64_t>(n_views_);
}

void FilteredBackprojection::filter_rows(std::vector<double>& rows) const {
    filter_padded_rows(fft_->rows, response_, rows.data(), n_views_ * n_rows_, n_cols_);
}

void FilteredBackprojection::voxel_projection(std::size_t a, const double x[3], double& col, double& row,
                                              double& weight) const {
    const double depth = sad_ - (cos_[a] * x[0] + sin_[a] * x[1]);
    const double mag = sdd_ / depth;
    col = mag * (-sin_[a] * x[0] + cos_[a] * x[1]) / du_ + 0.5 * static_cast<double>(n_cols_ - 1);
    row = ndim_ == 3 ? mag * x[2] / dv_ + 0.5 * static_cast<double>(n_rows_ - 1) : 0.0;
    const double u_ratio = depth / sad_;
    weight = dbeta_ / (u_ratio * u_ratio);
}

namespace {

void voxel_centre(const GridSpec& g, std::int64_t vox, double x[3]) {
    const int nd = g.ndim();
    const std::int64_t nx = g.shape[nd - 1], ny = g.shape[nd - 2];
    x[0] = g.center(nd - 1, vox % nx);
    x[1] = g.center(nd - 2, (vox / nx) % ny);
    x[2] = nd == 3 ? g.center(0, vox / (nx * ny)) : 0.0;
}

struct Taps {
    std::int64_t c0, r0;
    double wc, wr;
};

Taps taps(double col, double row) {
    const double fc = std::floor(col), fr = std::floor(row);
    return {static_cast<std::int64_t>(fc), static_cast<std::int64_t>(fr), col - fc, row - fr};
}

}  // namespace

template <class T>
void FilteredBackprojection::apply(std::span<const T> data, std::span<T> image) const {
    if (static_cast<std::int64_t>(data.size()) != data_size() || static_cast<std::int64_t>(image.size()) != image_size())
        throw std::invalid_argument("FilteredBackprojection::apply: shape mismatch");
    const std::int64_t plane = n_rows_ * n_cols_;
    std::vector<double> q(data.size());
    for (std::int64_t a = 0; a < n_views_; ++a)
        for (std::int64_t j = 0; j < plane; ++j)
            q[a * plane + j] = preweight_[j] * static_cast<double>(data[a * plane + j]);
    filter_rows(q);

    const std::int64_t n_vox = image_size();
#pragma omp parallel for schedule(static)
    for (std::int64_t vox = 0; vox < n_vox; ++vox) {
        double x[3];
        voxel_centre(grid_, vox, x);
        double acc = 0.0;
        for (std::size_t a = 0; a < static_cast<std::size_t>(n_views_); ++a) {
            double col, row, w;
            voxel_projection(a, x, col, row, w);
            const Taps t = taps(col, row);
            const double* view = q.data() + static_cast<std::int64_t>(a) * plane;
            double s = 0.0;
            for (int jr = 0; jr < (ndim_ == 3 ? 2 : 1); ++jr) {
                const std::int64_t r = ndim_ == 3 ? t.r0 + jr : 0;
                if (r < 0 || r >= n_rows_) continue;
                const double wr = ndim_ == 3 ? (jr ? t.wr : 1.0 - t.wr) : 1.0;
                for (int jc = 0; jc < 2; ++jc) {
                    const std::int64_t c = t.c0 + jc;
                    if (c < 0 || c >= n_cols_) continue;
                    const double wc = jc ? t.wc : 1.0 - t.wc;
                    s += (wr * wc) * view[r * n_cols_ + c];
                }
            }
            acc += w * s;
        }
        image[static_cast<std::size_t>(vox)] = static_cast<T>(acc);
    }
}

template <class T>
void FilteredBackprojection::transpose(std::span<const T> image, std::span<T> data) const {
    if (static_cast<std::int64_t>(data.size()) != data_size() || static_cast<std::int64_t>(image.size()) != image_size())
        throw std::invalid_argument("FilteredBackprojection::transpose: shape mismatch");
    const std::int64_t plane = n_rows_ * n_cols_;
    std::vector<double> q(data.size(), 0.0);
    const std::int64_t n_vox = image_size();
    // Each view row is written by one thread only, in voxel order.
#pragma omp parallel for schedule(static)
    for (std::int64_t a = 0; a < n_views_; ++a) {
        double* view = q.data() + a * plane;
        for (std::int64_t vox = 0; vox < n_vox; ++vox) {
            const double fv = static_cast<double>(image[static_cast<std::size_t>(vox)]);
            if (fv == 0.0) continue;
            double x[3];
            voxel_centre(grid_, vox, x);
            double col, row, w;
            voxel_projection(static_cast<std::size_t>(a), x, col, row, w);
            const Taps t = taps(col, row);
            for (int jr = 0; jr < (ndim_ == 3 ? 2 : 1); ++jr) {
                const std::int64_t r = ndim_ == 3 ? t.r0 + jr : 0;
                if (r < 0 || r >= n_rows_) continue;
                const double wr = ndim_ == 3 ? (jr ? t.wr : 1.0 - t.wr) : 1.0;
                for (int jc = 0; jc < 2; ++jc) {
                    const std::int64_t c = t.c0 + jc;
                    if (c < 0 || c >= n_cols_) continue;
                    const double wc = jc ? t.wc : 1.0 - t.wc;
                    view[r * n_cols_ + c] += w * ((wr * wc) * fv);
                }
            }
        }
    }
    filter_rows(q);
    for (std::int64_t a = 0; a < n_views_; ++a)
        for (std::int64_t j = 0; j < plane; ++j)
            data[static_cast<std::size_t>(a * plane + j)] = static_cast<T>(preweight_[j] * q[a * plane + j]);
}

template <class T>
std::vector<T> FilteredBackprojection::apply(std::span<const T> data) const {
    std::vector<T> out(static_cast<std::size_t>(image_size()));
    apply<T>(data, std::span<T>(out));
    return out;
}

template <class T>
std::vector<T> FilteredBackprojection::transpose(std::span<const T> image) const {
    std::vector<T> out(static_cast<std::size_t>(data_size()));
    transpose<T>(image, std::span<T>(out));
    return out;
}

std::unique_ptr<FilteredBackprojection> make_pseudo_inverse(const DiscretisationSequence& seq, int i,
                                                            const FilterSpec& spec) {
    return std::make_unique<FilteredBackprojection>(seq[i].image, seq[i].geometry, spec);
}

template <class T>
std::vector<T> filtered_grad_data_fit(std::span<const T> image, std::span<const T> finest_data,
                                      const DiscretisationSequence& seq, int i, const FilterSpec& spec) {
    const RayTransform op(seq[i].image, seq[i].geometry);
    const auto pinv = make_pseudo_inverse(seq, i, spec);
    const std::vector<T> gi = project_data<T>(finest_data, seq, i);
    std::vector<T> residual = op.forward<T>(image);
    for (std::size_t k = 0; k < residual.size(); ++k) residual[k] -= gi[k];
    return pinv->apply<T>(std::span<const T>(residual));
}

#define MSLIR_INSTANTIATE(T)                                                                                  \
    template void apply_row_filter<T>(std::span<T>, std::int64_t, std::span<const double>);                   \
    template std::vector<T> filter_sinogram<T>(std::span<const T>, const Shape&, double, const FilterSpec&);  \
    template void FilteredBackprojection::apply<T>(std::span<const T>, std::span<T>) const;                   \
    template void FilteredBackprojection::transpose<T>(std::span<const T>, std::span<T>) const;               \
    template std::vector<T> FilteredBackprojection::apply<T>(std::span<const T>) const;                       \
    template std::vector<T> FilteredBackprojection::transpose<T>(std::span<const T>) const;                   \
    template std::vector<T> filtered_grad_data_fit<T>(std::span<const T>, std::span<const T>,                 \
                                                      const DiscretisationSequence&, int, const FilterSpec&);
MSLIR_INSTANTIATE(float)
MSLIR_INSTANTIATE(double)
#undef MSLIR_INSTANTIATE

}  // namespace mslir
