#pragma once

#include <span>
#include <vector>

#include "mslir/sequence.hpp"

namespace mslir {

/// pi_i: finest data -> data on Y_i. Detector axes are reduced by the block
/// mean over the fine children that exist, the angle axis by decimation.
template <class T>
std::vector<T> project_data(std::span<const T> fine, const DiscretisationSequence& seq, int i);

/// Transpose of project_data.
template <class T>
std::vector<T> project_data_transpose(std::span<const T> coarse, const DiscretisationSequence& seq, int i);

/// tau_i: X_{i-1} -> X_i, factor-2 cell-centred (bi/tri)linear interpolation
/// with edge clamping. Identity when both spaces have the same shape.
template <class T>
std::vector<T> upsample(std::span<const T> coarse, const DiscretisationSequence& seq, int i);

/// Exact transpose of upsample.
template <class T>
std::vector<T> upsample_vjp(std::span<const T> fine, const DiscretisationSequence& seq, int i);

/// Factor-2 cell-centred interpolation of a row-major array of `shape`
/// along every axis; `fine` has each axis doubled.
template <class T>
void upsample2(std::span<const T> coarse, const Shape& shape, std::span<T> fine);

template <class T>
void upsample2_transpose(std::span<const T> fine, const Shape& coarse_shape, std::span<T> coarse);

}  // namespace mslir
