#include "kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "mslir/aligned.hpp"

namespace mslir::kernels {

namespace {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using MapConstMat = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;

constexpr std::int64_t kScratchElems = std::int64_t{1} << 20;

// Lines are (z, y) rows of length w; a chunk covers lines [l0, l1).
std::int64_t lines_per_chunk(const Dims& s, std::int64_t rows) {
    const std::int64_t n_lines = s.d * s.h;
    return std::clamp<std::int64_t>(kScratchElems / std::max<std::int64_t>(1, rows * s.w), 1, n_lines);
}

int taps(int k, int ndim) { return ndim == 3 ? k * k * k : k * k; }

// Tap t -> (dz, dy, dx) offsets for a 3-wide kernel.
void tap_offsets(int t, int ndim, int& dz, int& dy, int& dx) {
    dx = t % 3 - 1;
    dy = (t / 3) % 3 - 1;
    dz = ndim == 3 ? t / 9 - 1 : 0;
}

template <class T>
void im2col(const Dims& s, std::int64_t cin, const T* x, std::int64_t l0, std::int64_t l1, T* cols) {
    const int nt = taps(3, s.ndim);
    const std::int64_t w = s.w, p = (l1 - l0) * w, plane = s.size();
    for (std::int64_t ci = 0; ci < cin; ++ci) {
        const T* xc = x + ci * plane;
        for (int t = 0; t < nt; ++t) {
            int dz, dy, dx;
            tap_offsets(t, s.ndim, dz, dy, dx);
            T* row = cols + (ci * nt + t) * p;
            for (std::int64_t l = l0; l < l1; ++l) {
                const std::int64_t z = l / s.h + dz, y = l % s.h + dy;
                T* out = row + (l - l0) * w;
                if (z < 0 || z >= s.d || y < 0 || y >= s.h) {
                    std::fill(out, out + w, T(0));
                    continue;
                }
                const T* src = xc + (z * s.h + y) * w;
                if (dx == 0) {
                    std::copy(src, src + w, out);
                } else if (dx < 0) {
                    out[0] = T(0);
                    std::copy(src, src + w - 1, out + 1);
                } else {
                    std::copy(src + 1, src + w, out);
                    out[w - 1] = T(0);
                }
            }
        }
    }
}

template <class T>
void col2im_add(const Dims& s, std::int64_t cin, const T* cols, std::int64_t l0, std::int64_t l1, T* dx_out) {
    const int nt = taps(3, s.ndim);
    const std::int64_t w = s.w, p = (l1 - l0) * w, plane = s.size();
    for (std::int64_t ci = 0; ci < cin; ++ci) {
        T* xc = dx_out + ci * plane;
        for (int t = 0; t < nt; ++t) {
            int dz, dy, dx;
            tap_offsets(t, s.ndim, dz, dy, dx);
            const T* row = cols + (ci * nt + t) * p;
            for (std::int64_t l = l0; l < l1; ++l) {
                const std::int64_t z = l / s.h + dz, y = l % s.h + dy;
                if (z < 0 || z >= s.d || y < 0 || y >= s.h) continue;
                const T* in = row + (l - l0) * w;
                T* dst = xc + (z * s.h + y) * w;
                if (dx == 0) {
                    for (std::int64_t i = 0; i < w; ++i) dst[i] += in[i];
                } else if (dx < 0) {
                    for (std::int64_t i = 1; i < w; ++i) dst[i - 1] += in[i];
                } else {
                    for (std::int64_t i = 0; i + 1 < w; ++i) dst[i + 1] += in[i];
                }
            }
        }
    }
}

}  // namespace

template <class T>
void conv_forward(const Dims& s, std::int64_t cin, std::int64_t cout, int k, const T* x, const T* w, const T* b,
                  T* y) {
    const std::int64_t plane = s.size();
    if (k == 1) {
        MapConstMat<T> wm(w, cout, cin, Eigen::OuterStride<>(cin));
        MapConstMat<T> xm(x, cin, plane, Eigen::OuterStride<>(plane));
        MapMat<T> ym(y, cout, plane, Eigen::OuterStride<>(plane));
        ym.noalias() = wm * xm;
        for (std::int64_t co = 0; co < cout; ++co) ym.row(co).array() += b[co];
        return;
    }
    const std::int64_t kk = cin * taps(k, s.ndim);
    const std::int64_t chunk = lines_per_chunk(s, kk);
    Buffer<T> cols(static_cast<std::size_t>(kk * chunk * s.w));
    MapConstMat<T> wm(w, cout, kk, Eigen::OuterStride<>(kk));
    for (std::int64_t l0 = 0; l0 < s.d * s.h; l0 += chunk) {
        const std::int64_t l1 = std::min(l0 + chunk, s.d * s.h), p = (l1 - l0) * s.w;
        im2col(s, cin, x, l0, l1, cols.data());
        MapConstMat<T> cm(cols.data(), kk, p, Eigen::OuterStride<>(p));
        MapMat<T> ym(y + l0 * s.w, cout, p, Eigen::OuterStride<>(plane));
        ym.noalias() = wm * cm;
        for (std::int64_t co = 0; co < cout; ++co) ym.row(co).array() += b[co];
    }
}

template <class T>
void conv_backward(const Dims& s, std::int64_t cin, std::int64_t cout, int k, const T* x, const T* w, const T* dy,
                   T* dx, T* dw, T* db) {
    const std::int64_t plane = s.size();
    {
        MapConstMat<T> dym(dy, cout, plane, Eigen::OuterStride<>(plane));
        for (std::int64_t co = 0; co < cout; ++co) db[co] += dym.row(co).sum();
    }
    if (k == 1) {
        MapConstMat<T> wm(w, cout, cin, Eigen::OuterStride<>(cin));
        MapConstMat<T> xm(x, cin, plane, Eigen::OuterStride<>(plane));
        MapConstMat<T> dym(dy, cout, plane, Eigen::OuterStride<>(plane));
        MapMat<T> dwm(dw, cout, cin, Eigen::OuterStride<>(cin));
        dwm.noalias() += dym * xm.transpose();
        if (dx) {
            MapMat<T> dxm(dx, cin, plane, Eigen::OuterStride<>(plane));
            dxm.noalias() += wm.transpose() * dym;
        }
        return;
    }
    const std::int64_t kk = cin * taps(k, s.ndim);
    const std::int64_t chunk = lines_per_chunk(s, kk);
    Buffer<T> cols(static_cast<std::size_t>(kk * chunk * s.w));
    Buffer<T> dcols(dx ? cols.size() : 0);
    MapConstMat<T> wm(w, cout, kk, Eigen::OuterStride<>(kk));
    MapMat<T> dwm(dw, cout, kk, Eigen::OuterStride<>(kk));
    for (std::int64_t l0 = 0; l0 < s.d * s.h; l0 += chunk) {
        const std::int64_t l1 = std::min(l0 + chunk, s.d * s.h), p = (l1 - l0) * s.w;
        im2col(s, cin, x, l0, l1, cols.data());
        MapConstMat<T> cm(cols.data(), kk, p, Eigen::OuterStride<>(p));
        MapConstMat<T> dym(dy + l0 * s.w, cout, p, Eigen::OuterStride<>(plane));
        dwm.noalias() += dym * cm.transpose();
        if (dx) {
            MapMat<T> dcm(dcols.data(), kk, p, Eigen::OuterStride<>(p));
            dcm.noalias() = wm.transpose() * dym;
            col2im_add(s, cin, dcols.data(), l0, l1, dx);
        }
    }
}

namespace {

// Output offset of input pixel p under sub-position t of a factor-2 refinement.
struct Refine {
    Dims in;
    std::int64_t ow, oh;
    int nt;
    explicit Refine(const Dims& s) : in(s), ow(2 * s.w), oh(2 * s.h), nt(s.ndim == 3 ? 8 : 4) {}
    std::int64_t offset(std::int64_t z, std::int64_t y, std::int64_t x, int t) const {
        const int tx = t & 1, ty = (t >> 1) & 1, tz = (t >> 2) & 1;
        return ((2 * z + tz) * oh + 2 * y + ty) * ow + 2 * x + tx;
    }
};

}  // namespace

template <class T>
void conv_transpose2_forward(const Dims& s, std::int64_t cin, std::int64_t cout, const T* x, const T* w, const T* b,
                             T* y) {
    const Refine r(s);
    const std::int64_t plane = s.size(), out_plane = plane * r.nt, ct = cout * r.nt;
    Mat<T> z(ct, plane);
    MapConstMat<T> wm(w, cin, ct, Eigen::OuterStride<>(ct));
    MapConstMat<T> xm(x, cin, plane, Eigen::OuterStride<>(plane));
    z.noalias() = wm.transpose() * xm;
    for (std::int64_t co = 0; co < cout; ++co) {
        T* yc = y + co * out_plane;
        for (int t = 0; t < r.nt; ++t) {
            const T* zr = z.data() + (co * r.nt + t) * plane;
            std::int64_t p = 0;
            for (std::int64_t zz = 0; zz < s.d; ++zz)
                for (std::int64_t yy = 0; yy < s.h; ++yy)
                    for (std::int64_t xx = 0; xx < s.w; ++xx, ++p) yc[r.offset(zz, yy, xx, t)] = zr[p] + b[co];
        }
    }
}

template <class T>
void conv_transpose2_backward(const Dims& s, std::int64_t cin, std::int64_t cout, const T* x, const T* w,
                              const T* dy, T* dx, T* dw, T* db) {
    const Refine r(s);
    const std::int64_t plane = s.size(), out_plane = plane * r.nt, ct = cout * r.nt;
    Mat<T> dz(ct, plane);
    for (std::int64_t co = 0; co < cout; ++co) {
        const T* dyc = dy + co * out_plane;
        T acc = 0;
        for (std::int64_t q = 0; q < out_plane; ++q) acc += dyc[q];
        db[co] += acc;
        for (int t = 0; t < r.nt; ++t) {
            T* zr = dz.data() + (co * r.nt + t) * plane;
            std::int64_t p = 0;
            for (std::int64_t zz = 0; zz < s.d; ++zz)
                for (std::int64_t yy = 0; yy < s.h; ++yy)
                    for (std::int64_t xx = 0; xx < s.w; ++xx, ++p) zr[p] = dyc[r.offset(zz, yy, xx, t)];
        }
    }
    MapConstMat<T> wm(w, cin, ct, Eigen::OuterStride<>(ct));
    MapConstMat<T> xm(x, cin, plane, Eigen::OuterStride<>(plane));
    MapMat<T> dwm(dw, cin, ct, Eigen::OuterStride<>(ct));
    dwm.noalias() += xm * dz.transpose();
    if (dx) {
        MapMat<T> dxm(dx, cin, plane, Eigen::OuterStride<>(plane));
        dxm.noalias() += wm * dz;
    }
}

template <class T>
void maxpool2_forward(const Dims& s, std::int64_t channels, const T* x, T* y, std::int32_t* arg) {
    const std::int64_t od = s.ndim == 3 ? s.d / 2 : 1, oh = s.h / 2, ow = s.w / 2;
    const std::int64_t in_plane = s.size(), out_plane = od * oh * ow;
    const int nt = s.ndim == 3 ? 8 : 4;
    for (std::int64_t c = 0; c < channels; ++c) {
        const T* xc = x + c * in_plane;
        std::int64_t q = c * out_plane;
        for (std::int64_t z = 0; z < od; ++z)
            for (std::int64_t yy = 0; yy < oh; ++yy)
                for (std::int64_t xx = 0; xx < ow; ++xx, ++q) {
                    std::int64_t best = -1;
                    T best_v = T(0);
                    for (int t = 0; t < nt; ++t) {
                        const int tx = t & 1, ty = (t >> 1) & 1, tz = (t >> 2) & 1;
                        const std::int64_t off = ((2 * z + tz) * s.h + 2 * yy + ty) * s.w + 2 * xx + tx;
                        if (best < 0 || xc[off] > best_v) {
                            best = off;
                            best_v = xc[off];
                        }
                    }
                    y[q] = best_v;
                    arg[q] = static_cast<std::int32_t>(best);
                }
    }
}

template <class T>
void maxpool2_backward(const Dims& s, std::int64_t channels, const std::int32_t* arg, const T* dy, T* dx) {
    const std::int64_t od = s.ndim == 3 ? s.d / 2 : 1;
    const std::int64_t in_plane = s.size(), out_plane = od * (s.h / 2) * (s.w / 2);
    for (std::int64_t c = 0; c < channels; ++c)
        for (std::int64_t q = 0; q < out_plane; ++q) dx[c * in_plane + arg[c * out_plane + q]] += dy[c * out_plane + q];
}

#define MSLIR_INSTANTIATE(T)                                                                                       \
    template void conv_forward<T>(const Dims&, std::int64_t, std::int64_t, int, const T*, const T*, const T*, T*); \
    template void conv_backward<T>(const Dims&, std::int64_t, std::int64_t, int, const T*, const T*, const T*, T*, \
                                   T*, T*);                                                                        \
    template void conv_transpose2_forward<T>(const Dims&, std::int64_t, std::int64_t, const T*, const T*,         \
                                             const T*, T*);                                                        \
    template void conv_transpose2_backward<T>(const Dims&, std::int64_t, std::int64_t, const T*, const T*,        \
                                              const T*, T*, T*, T*);                                               \
    template void maxpool2_forward<T>(const Dims&, std::int64_t, const T*, T*, std::int32_t*);                    \
    template void maxpool2_backward<T>(const Dims&, std::int64_t, const std::int32_t*, const T*, T*);
MSLIR_INSTANTIATE(float)
MSLIR_INSTANTIATE(double)
#undef MSLIR_INSTANTIATE

}  // namespace mslir::kernels
