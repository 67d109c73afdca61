#pragma once

// Dense tensor kernels used by the autodiff graph. All tensors are a single
// batch element, row-major (channels, depth, height, width); 2D data uses
// depth 1.

#include <cstdint>

namespace mslir::kernels {

struct Dims {
    int ndim = 2;  // spatial dimensions, 2 or 3
    std::int64_t d = 1, h = 1, w = 1;
    std::int64_t size() const { return d * h * w; }
};

/// "same" convolution with kernel k in {1, 3}; weight (cout, cin, k^ndim).
template <class T>
void conv_forward(const Dims& s, std::int64_t cin, std::int64_t cout, int k, const T* x, const T* w, const T* b, T* y);

/// Accumulates into dx (if non-null), dw and db.
template <class T>
void conv_backward(const Dims& s, std::int64_t cin, std::int64_t cout, int k, const T* x, const T* w, const T* dy,
                   T* dx, T* dw, T* db);

/// Kernel 2 stride 2 transposed convolution; `s` is the input size, weight (cin, cout, 2^ndim).
template <class T>
void conv_transpose2_forward(const Dims& s, std::int64_t cin, std::int64_t cout, const T* x, const T* w, const T* b,
                             T* y);

template <class T>
void conv_transpose2_backward(const Dims& s, std::int64_t cin, std::int64_t cout, const T* x, const T* w,
                              const T* dy, T* dx, T* dw, T* db);

/// 2^ndim max pooling; `s` is the input size (even along every axis). Stores
/// the input offset of each maximum (first one on ties) in `arg`.
template <class T>
void maxpool2_forward(const Dims& s, std::int64_t channels, const T* x, T* y, std::int32_t* arg);

template <class T>
void maxpool2_backward(const Dims& s, std::int64_t channels, const std::int32_t* arg, const T* dy, T* dx);

}  // namespace mslir::kernels
