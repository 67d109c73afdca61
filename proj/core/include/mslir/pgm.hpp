#pragma once

#include <filesystem>
#include <span>

#include "mslir/grid.hpp"

namespace mslir {

/// Binary 16-bit PGM (maxval 65535, big-endian samples). Values are mapped
/// linearly from [lo, hi] to [0, 65535] and clamped. 3D volumes export their
/// central z slice.
void write_pgm(const std::filesystem::path& path, std::span<const float> values, const Shape& shape, double lo,
               double hi);

}  // namespace mslir
