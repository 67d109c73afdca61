#include "mslir/resample.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mslir {

namespace {

// Index mapping for one detector axis: coarse element m averages fine
// elements [offset + m*factor, offset + (m+1)*factor) that fall inside [0, n_fine).
struct AxisBlocks {
    std::int64_t n_fine;
    std::int64_t n_coarse;
    std::int64_t factor;
    std::int64_t offset;

    AxisBlocks(std::int64_t fine, std::int64_t coarse, std::int64_t f)
        : n_fine(fine), n_coarse(coarse), factor(f), offset((fine - f * coarse) / 2) {}

    std::int64_t begin(std::int64_t m) const { return std::clamp(offset + m * factor, std::int64_t{0}, n_fine); }
    std::int64_t end(std::int64_t m) const { return std::clamp(offset + (m + 1) * factor, std::int64_t{0}, n_fine); }
};

struct DataMapping {
    std::int64_t n_angles_coarse;
    std::int64_t angle_stride;
    AxisBlocks rows;  // trivial (factor 1) in 2D
    AxisBlocks cols;
    std::int64_t fine_rows, fine_cols;
};

DataMapping data_mapping(const DiscretisationSequence& seq, int i) {
    const Scale& s = seq[i];
    const Shape fine = data_shape(seq.finest().geometry);
    const Shape coarse = data_shape(s.geometry);
    if (fine.size() == 2) {
        return {coarse[0], s.angle_stride, AxisBlocks(1, 1, 1), AxisBlocks(fine[1], coarse[1], s.detector_factor), 1,
                fine[1]};
    }
    return {coarse[0], s.angle_stride, AxisBlocks(fine[1], coarse[1], s.detector_factor),
            AxisBlocks(fine[2], coarse[2], s.detector_factor), fine[1], fine[2]};
}

void check_size(std::size_t got, std::int64_t want, const char* what) {
    if (static_cast<std::int64_t>(got) != want) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                                    std::to_string(got));
    }
}

// Linear interpolation taps for a factor-2 cell-centred refinement of an axis of length n.
struct Tap {
    std::int64_t lo, hi;
    double w_lo, w_hi;
};

Tap tap(std::int64_t j, std::int64_t n) {
    // fine cell j sits at coarse coordinate j/2 - 1/4
    const std::int64_t m = j / 2;
    std::int64_t lo = (j % 2 == 0) ? m - 1 : m;
    std::int64_t hi = lo + 1;
    const double w_hi = (j % 2 == 0) ? 0.75 : 0.25;
    lo = std::clamp(lo, std::int64_t{0}, n - 1);
    hi = std::clamp(hi, std::int64_t{0}, n - 1);
    return {lo, hi, 1.0 - w_hi, w_hi};
}

// Refine axis `axis` of a row-major array: outer x n x inner -> outer x 2n x inner.
template <class T>
void refine_axis(const std::vector<T>& in, std::vector<T>& out, std::int64_t outer, std::int64_t n,
                 std::int64_t inner) {
    out.assign(static_cast<std::size_t>(outer * 2 * n * inner), T(0));
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t j = 0; j < 2 * n; ++j) {
            const Tap t = tap(j, n);
            const T* lo = &in[(o * n + t.lo) * inner];
            const T* hi = &in[(o * n + t.hi) * inner];
            T* dst = &out[(o * 2 * n + j) * inner];
            for (std::int64_t k = 0; k < inner; ++k)
                dst[k] = static_cast<T>(t.w_lo * lo[k] + t.w_hi * hi[k]);
        }
    }
}

template <class T>
void refine_axis_transpose(const std::vector<T>& in, std::vector<T>& out, std::int64_t outer, std::int64_t n,
                           std::int64_t inner) {
    out.assign(static_cast<std::size_t>(outer * n * inner), T(0));
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t j = 0; j < 2 * n; ++j) {
            const Tap t = tap(j, n);
            const T* src = &in[(o * 2 * n + j) * inner];
            T* lo = &out[(o * n + t.lo) * inner];
            T* hi = &out[(o * n + t.hi) * inner];
            for (std::int64_t k = 0; k < inner; ++k) {
                lo[k] += static_cast<T>(t.w_lo * src[k]);
                hi[k] += static_cast<T>(t.w_hi * src[k]);
            }
        }
    }
}

}  // namespace

template <class T>
std::vector<T> project_data(std::span<const T> fine, const DiscretisationSequence& seq, int i) {
    check_size(fine.size(), numel(data_shape(seq.finest().geometry)), "project_data");
    if (i == seq.finest_index()) return {fine.begin(), fine.end()};
    const DataMapping m = data_mapping(seq, i);
    std::vector<T> out(static_cast<std::size_t>(m.n_angles_coarse * m.rows.n_coarse * m.cols.n_coarse));
    for (std::int64_t a = 0; a < m.n_angles_coarse; ++a) {
        const T* src = &fine[static_cast<std::size_t>(a * m.angle_stride * m.fine_rows * m.fine_cols)];
        T* dst = &out[static_cast<std::size_t>(a * m.rows.n_coarse * m.cols.n_coarse)];
        for (std::int64_t r = 0; r < m.rows.n_coarse; ++r) {
            for (std::int64_t c = 0; c < m.cols.n_coarse; ++c) {
                double sum = 0.0;
                std::int64_t count = 0;
                for (std::int64_t fr = m.rows.begin(r); fr < m.rows.end(r); ++fr)
                    for (std::int64_t fc = m.cols.begin(c); fc < m.cols.end(c); ++fc, ++count)
                        sum += src[fr * m.fine_cols + fc];
                dst[r * m.cols.n_coarse + c] = count ? static_cast<T>(sum / static_cast<double>(count)) : T(0);
            }
        }
    }
    return out;
}

template <class T>
std::vector<T> project_data_transpose(std::span<const T> coarse, const DiscretisationSequence& seq, int i) {
    check_size(coarse.size(), numel(data_shape(seq[i].geometry)), "project_data_transpose");
    if (i == seq.finest_index()) return {coarse.begin(), coarse.end()};
    const DataMapping m = data_mapping(seq, i);
    const Shape fine_shape = data_shape(seq.finest().geometry);
    std::vector<T> out(static_cast<std::size_t>(numel(fine_shape)), T(0));
    for (std::int64_t a = 0; a < m.n_angles_coarse; ++a) {
        T* dst = &out[static_cast<std::size_t>(a * m.angle_stride * m.fine_rows * m.fine_cols)];
        const T* src = &coarse[static_cast<std::size_t>(a * m.rows.n_coarse * m.cols.n_coarse)];
        for (std::int64_t r = 0; r < m.rows.n_coarse; ++r) {
            for (std::int64_t c = 0; c < m.cols.n_coarse; ++c) {
                const std::int64_t count =
                    (m.rows.end(r) - m.rows.begin(r)) * (m.cols.end(c) - m.cols.begin(c));
                if (count == 0) continue;
                const double v = static_cast<double>(src[r * m.cols.n_coarse + c]) / static_cast<double>(count);
                for (std::int64_t fr = m.rows.begin(r); fr < m.rows.end(r); ++fr)
                    for (std::int64_t fc = m.cols.begin(c); fc < m.cols.end(c); ++fc)
                        dst[fr * m.fine_cols + fc] += static_cast<T>(v);
            }
        }
    }
    return out;
}

template <class T>
void upsample2(std::span<const T> coarse, const Shape& shape, std::span<T> fine) {
    check_size(coarse.size(), numel(shape), "upsample2");
    check_size(fine.size(), numel(shape) << shape.size(), "upsample2 output");
    std::vector<T> cur(coarse.begin(), coarse.end()), next;
    Shape s = shape;
    for (std::size_t axis = 0; axis < s.size(); ++axis) {
        std::int64_t outer = 1, inner = 1;
        for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
        for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
        refine_axis(cur, next, outer, s[axis], inner);
        s[axis] *= 2;
        cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), fine.begin());
}

template <class T>
void upsample2_transpose(std::span<const T> fine, const Shape& coarse_shape, std::span<T> coarse) {
    check_size(coarse.size(), numel(coarse_shape), "upsample2_transpose output");
    check_size(fine.size(), numel(coarse_shape) << coarse_shape.size(), "upsample2_transpose");
    std::vector<T> cur(fine.begin(), fine.end()), next;
    Shape s = coarse_shape;
    for (auto& v : s) v *= 2;
    for (std::size_t k = s.size(); k-- > 0;) {
        std::int64_t outer = 1, inner = 1;
        for (std::size_t a = 0; a < k; ++a) outer *= s[a];
        for (std::size_t a = k + 1; a < s.size(); ++a) inner *= s[a];
        s[k] /= 2;
        refine_axis_transpose(cur, next, outer, s[k], inner);
        cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), coarse.begin());
}

namespace {

void check_upsample_index(const DiscretisationSequence& seq, int i) {
    if (i < 1 || i >= seq.size()) throw std::invalid_argument("upsample index out of range");
}

bool same_shape(const DiscretisationSequence& seq, int i) { return seq[i - 1].image.shape == seq[i].image.shape; }

}  // namespace

template <class T>
std::vector<T> upsample(std::span<const T> coarse, const DiscretisationSequence& seq, int i) {
    check_upsample_index(seq, i);
    check_size(coarse.size(), seq[i - 1].image.size(), "upsample");
    if (same_shape(seq, i)) return {coarse.begin(), coarse.end()};
    std::vector<T> out(static_cast<std::size_t>(seq[i].image.size()));
    upsample2<T>(coarse, seq[i - 1].image.shape, out);
    return out;
}

template <class T>
std::vector<T> upsample_vjp(std::span<const T> fine, const DiscretisationSequence& seq, int i) {
    check_upsample_index(seq, i);
    check_size(fine.size(), seq[i].image.size(), "upsample_vjp");
    if (same_shape(seq, i)) return {fine.begin(), fine.end()};
    std::vector<T> out(static_cast<std::size_t>(seq[i - 1].image.size()));
    upsample2_transpose<T>(fine, seq[i - 1].image.shape, out);
    return out;
}

#define MSLIR_INSTANTIATE(T)                                                                              \
    template std::vector<T> project_data<T>(std::span<const T>, const DiscretisationSequence&, int);      \
    template std::vector<T> project_data_transpose<T>(std::span<const T>, const DiscretisationSequence&, \
                                                      int);                                              \
    template std::vector<T> upsample<T>(std::span<const T>, const DiscretisationSequence&, int);          \
    template std::vector<T> upsample_vjp<T>(std::span<const T>, const DiscretisationSequence&, int);      \
    template void upsample2<T>(std::span<const T>, const Shape&, std::span<T>);                          \
    template void upsample2_transpose<T>(std::span<const T>, const Shape&, std::span<T>);
MSLIR_INSTANTIATE(float)
MSLIR_INSTANTIATE(double)
#undef MSLIR_INSTANTIATE

}  // namespace mslir
