#include "mslir/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mslir {

void write_pgm(const std::filesystem::path& path, std::span<const float> values, const Shape& shape, double lo,
               double hi) {
    if (shape.size() != 2 && shape.size() != 3) throw std::invalid_argument("write_pgm: needs a 2D or 3D shape");
    if (numel(shape) != static_cast<std::int64_t>(values.size()))
        throw std::invalid_argument("write_pgm: shape " + to_string(shape) + " does not match the data");
    if (!(hi > lo)) throw std::invalid_argument("write_pgm: window needs hi > lo");
    const std::int64_t ny = shape[shape.size() - 2], nx = shape.back();
    const std::int64_t offset = shape.size() == 3 ? (shape[0] / 2) * ny * nx : 0;
    std::vector<unsigned char> bytes;
    bytes.reserve(static_cast<std::size_t>(2 * ny * nx));
    for (std::int64_t k = 0; k < ny * nx; ++k) {
        const double t = std::clamp((static_cast<double>(values[static_cast<std::size_t>(offset + k)]) - lo) / (hi - lo), 0.0, 1.0);
        const auto v = static_cast<unsigned>(std::lround(t * 65535.0));
        bytes.push_back(static_cast<unsigned char>(v >> 8));
        bytes.push_back(static_cast<unsigned char>(v & 0xff));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_pgm: cannot write " + path.string());
    out << "P5\n" << nx << ' ' << ny << "\n65535\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace mslir
