#include "mslir/simulation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mslir {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(base) ^ stream) ^ index);
}

void EllipsePhantomSpec::validate() const {
    if (min_count < 0 || max_count < min_count) throw std::invalid_argument("phantom: bad ellipse count range");
    if (!(min_axis > 0) || max_axis < min_axis) throw std::invalid_argument("phantom: bad semi-axis range");
    if (max_density < min_density) throw std::invalid_argument("phantom: bad density range");
    if (!(v_max > 0)) throw std::invalid_argument("phantom: v_max must be positive");
    if (supersample < 1) throw std::invalid_argument("phantom: supersample must be at least 1");
}

std::vector<Ellipse> draw_ellipses(const EllipsePhantomSpec& spec, int ndim, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const int count = std::uniform_int_distribution<int>(spec.min_count, spec.max_count)(rng);
    std::vector<Ellipse> out(static_cast<std::size_t>(count));
    for (auto& e : out) {
        for (int a = 0; a < 3; ++a) {
            e.center[a] = a < ndim ? uniform(-spec.max_center, spec.max_center) : 0.0;
            e.axes[a] = a < ndim ? uniform(spec.min_axis, spec.max_axis) : 1.0;
        }
        e.angle = uniform(0.0, 3.14159265358979323846);
        e.density = uniform(spec.min_density, spec.max_density);
    }
    return out;
}

std::vector<float> rasterize(std::span<const Ellipse> ellipses, const GridSpec& grid, int supersample, double v_max) {
    grid.validate();
    const int nd = grid.ndim();
    // physical axis a (0=x, 1=y, 2=z) is row-major axis nd-1-a
    std::int64_t n[3] = {1, 1, 1};
    double lo[3] = {0, 0, 0}, step[3] = {1, 1, 1};
    for (int a = 0; a < nd; ++a) {
        const int r = nd - 1 - a;
        const double half = 0.5 * grid.extent(r);
        const double origin = grid.origin.empty() ? -half : grid.origin[static_cast<std::size_t>(r)];
        const double mid = origin + half;
        n[a] = grid.shape[static_cast<std::size_t>(r)];
        // normalised coordinate of cell i, sub-sample s: lo + (i * S + s + 0.5) * step
        step[a] = grid.spacing[static_cast<std::size_t>(r)] / supersample / half;
        lo[a] = (origin - mid) / half;
    }
    const int S = supersample;
    const std::int64_t sz = nd == 3 ? S : 1;
    const double per_cell = 1.0 / static_cast<double>(S * S * sz);
    std::vector<double> acc(static_cast<std::size_t>(grid.size()), 0.0);
    for (const auto& e : ellipses) {
        const double c = std::cos(e.angle), s = std::sin(e.angle);
        // bounding box in cell indices (radius = largest semi-axis)
        std::int64_t i0[3], i1[3];
        for (int a = 0; a < 3; ++a) {
            if (a >= nd) {
                i0[a] = 0;
                i1[a] = 1;
                continue;
            }
            const double r = a < 2 ? std::max(e.axes[0], e.axes[1]) : e.axes[2];
            const double cell = step[a] * S;
            i0[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((e.center[a] - r - lo[a]) / cell)), 0, n[a]);
            i1[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil((e.center[a] + r - lo[a]) / cell)) + 1, 0, n[a]);
        }
        for (std::int64_t z = i0[2]; z < i1[2]; ++z)
            for (std::int64_t y = i0[1]; y < i1[1]; ++y)
                for (std::int64_t x = i0[0]; x < i1[0]; ++x) {
                    int inside = 0;
                    for (std::int64_t sk = 0; sk < sz; ++sk) {
                        double dz2 = 0;
                        if (nd == 3) {
                            const double pz = lo[2] + (static_cast<double>(z * S + sk) + 0.5) * step[2];
                            dz2 = (pz - e.center[2]) / e.axes[2];
                            dz2 *= dz2;
                        }
                        for (int sj = 0; sj < S; ++sj) {
                            const double dy = lo[1] + (static_cast<double>(y * S + sj) + 0.5) * step[1] - e.center[1];
                            for (int si = 0; si < S; ++si) {
                                const double dx = lo[0] + (static_cast<double>(x * S + si) + 0.5) * step[0] - e.center[0];
                                const double u = (c * dx + s * dy) / e.axes[0];
                                const double v = (-s * dx + c * dy) / e.axes[1];
                                inside += u * u + v * v + dz2 <= 1.0;
                            }
                        }
                    }
                    if (inside) acc[static_cast<std::size_t>((z * n[1] + y) * n[0] + x)] += e.density * inside * per_cell;
                }
    }
    std::vector<float> out(acc.size());
    for (std::size_t k = 0; k < acc.size(); ++k) out[k] = static_cast<float>(std::clamp(acc[k], 0.0, v_max));
    return out;
}

std::vector<float> make_phantom(const EllipsePhantomSpec& spec, const GridSpec& grid, std::uint64_t seed) {
    const auto e = draw_ellipses(spec, grid.ndim(), seed);
    return rasterize(e, grid, spec.supersample, spec.v_max);
}

std::vector<float> add_gaussian(std::span<const float> g, double level, std::uint64_t seed) {
    if (level < 0) throw std::invalid_argument("noise level must be non-negative");
    std::vector<float> out(g.begin(), g.end());
    if (level == 0 || g.empty()) return out;
    double mean_abs = 0;
    for (float v : g) mean_abs += std::abs(static_cast<double>(v));
    mean_abs /= static_cast<double>(g.size());
    const double sigma = level * mean_abs;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : out) v = static_cast<float>(static_cast<double>(v) + sigma * normal(rng));
    return out;
}

std::vector<double> expected_counts(std::span<const double> p, const LowDoseModel& m) {
    std::vector<double> out(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) out[k] = m.photons * std::exp(-m.mu * p[k] / 10.0);
    return out;
}

std::vector<double> linearise(std::span<const double> counts, const LowDoseModel& m) {
    std::vector<double> out(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        out[k] = -std::log(std::max(counts[k], 1.0) / m.photons) / m.mu * 10.0;
    return out;
}

std::vector<float> simulate_lowdose(std::span<const float> f, const RayTransform& op, const LowDoseModel& model,
                                    std::uint64_t seed, bool noiseless) {
    for (float v : f)
        if (!(v >= 0.0f)) throw std::invalid_argument("low-dose simulation needs a non-negative image");
    const std::vector<double> fd(f.begin(), f.end());
    const auto p = op.forward<double>(std::span<const double>(fd));
    auto counts = expected_counts(p, model);
    if (!noiseless) {
        std::mt19937_64 rng(seed);
        for (auto& c : counts) c = static_cast<double>(std::poisson_distribution<std::int64_t>(c)(rng));
    }
    const auto lin = linearise(counts, model);
    return {lin.begin(), lin.end()};
}

// ---------------------------------------------------------------- raw volumes

ElementType parse_element_type(std::string_view name) {
    if (name == "u8") return ElementType::u8;
    if (name == "u16") return ElementType::u16;
    if (name == "i16") return ElementType::i16;
    if (name == "f32") return ElementType::f32;
    if (name == "f64") return ElementType::f64;
    throw std::invalid_argument("unknown element type '" + std::string(name) + "' (u8, u16, i16, f32, f64)");
}

std::string_view to_string(ElementType type) {
    switch (type) {
        case ElementType::u8: return "u8";
        case ElementType::u16: return "u16";
        case ElementType::i16: return "i16";
        case ElementType::f32: return "f32";
        case ElementType::f64: return "f64";
    }
    return "?";
}

std::size_t element_size(ElementType type) {
    switch (type) {
        case ElementType::u8: return 1;
        case ElementType::u16:
        case ElementType::i16: return 2;
        case ElementType::f32: return 4;
        case ElementType::f64: return 8;
    }
    return 0;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta");
}

namespace {

bool host_is(Endian e) {
    return (std::endian::native == std::endian::little) == (e == Endian::little);
}

template <class U>
void put(std::vector<char>& buf, std::size_t k, U v, Endian e) {
    char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    if (!host_is(e)) std::reverse(b, b + sizeof(U));
    std::memcpy(buf.data() + k * sizeof(U), b, sizeof(U));
}

template <class U>
U get(const std::vector<char>& buf, std::size_t k, Endian e) {
    char b[sizeof(U)];
    std::memcpy(b, buf.data() + k * sizeof(U), sizeof(U));
    if (!host_is(e)) std::reverse(b, b + sizeof(U));
    U v;
    std::memcpy(&v, b, sizeof(U));
    return v;
}

template <class U>
U to_int(float v) {
    const double lo = static_cast<double>(std::numeric_limits<U>::min());
    const double hi = static_cast<double>(std::numeric_limits<U>::max());
    return static_cast<U>(std::clamp(std::round(static_cast<double>(v)), lo, hi));
}

template <class V>
std::string join(const std::vector<V>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

template <class V>
std::vector<V> split(const std::string& s, const std::string& key) {
    std::vector<V> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::istringstream is(item);
        V v;
        if (!(is >> v)) throw std::runtime_error("sidecar: bad value '" + item + "' for key '" + key + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<float> read_values(const std::filesystem::path& path, std::int64_t count, ElementType type, Endian endian) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    const auto expected = static_cast<std::uintmax_t>(count) * element_size(type);
    const auto actual = std::filesystem::file_size(path);
    if (actual != expected)
        throw std::runtime_error("'" + path.string() + "' has " + std::to_string(actual) + " bytes, expected " +
                                 std::to_string(expected));
    std::vector<char> buf(static_cast<std::size_t>(expected));
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("short read from '" + path.string() + "'");
    std::vector<float> out(static_cast<std::size_t>(count));
    for (std::size_t k = 0; k < out.size(); ++k) {
        switch (type) {
            case ElementType::u8: out[k] = static_cast<unsigned char>(buf[k]); break;
            case ElementType::u16: out[k] = get<std::uint16_t>(buf, k, endian); break;
            case ElementType::i16: out[k] = get<std::int16_t>(buf, k, endian); break;
            case ElementType::f32: out[k] = get<float>(buf, k, endian); break;
            case ElementType::f64: out[k] = static_cast<float>(get<double>(buf, k, endian)); break;
        }
    }
    return out;
}

}  // namespace

void save_raw_volume(const std::filesystem::path& path, const GridSpec& grid, std::span<const float> values,
                     ElementType type, Endian endian) {
    grid.validate();
    if (static_cast<std::int64_t>(values.size()) != grid.size())
        throw std::invalid_argument("raw volume: " + std::to_string(values.size()) + " values for grid " +
                                    to_string(grid.shape));
    std::vector<char> buf(values.size() * element_size(type));
    for (std::size_t k = 0; k < values.size(); ++k) {
        switch (type) {
            case ElementType::u8: buf[k] = static_cast<char>(to_int<std::uint8_t>(values[k])); break;
            case ElementType::u16: put(buf, k, to_int<std::uint16_t>(values[k]), endian); break;
            case ElementType::i16: put(buf, k, to_int<std::int16_t>(values[k]), endian); break;
            case ElementType::f32: put(buf, k, values[k], endian); break;
            case ElementType::f64: put(buf, k, static_cast<double>(values[k]), endian); break;
        }
    }
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    std::ofstream meta(sidecar_path(path), std::ios::trunc);
    meta << "shape=" << join(grid.shape) << "\n"
         << "spacing=" << join(grid.spacing) << "\n";
    if (!grid.origin.empty()) meta << "origin=" << join(grid.origin) << "\n";
    meta << "type=" << to_string(type) << "\n"
         << "endian=" << (endian == Endian::little ? "little" : "big") << "\n";
    if (!meta) throw std::runtime_error("cannot write '" + sidecar_path(path).string() + "'");
}

RawVolume load_raw_volume(const std::filesystem::path& path) {
    std::ifstream meta(sidecar_path(path));
    if (!meta) throw std::runtime_error("cannot open sidecar '" + sidecar_path(path).string() + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(meta, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("sidecar: expected key=value, got '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const auto& [k, v] : kv)
        if (k != "shape" && k != "spacing" && k != "origin" && k != "type" && k != "endian")
            throw std::runtime_error("sidecar: unknown key '" + k + "'");
    if (!kv.count("shape")) throw std::runtime_error("sidecar: missing 'shape'");
    GridSpec grid;
    grid.shape = split<std::int64_t>(kv["shape"], "shape");
    grid.spacing = kv.count("spacing") ? split<double>(kv["spacing"], "spacing")
                                       : std::vector<double>(grid.shape.size(), 1.0);
    if (kv.count("origin")) {
        grid.origin = split<double>(kv["origin"], "origin");
    } else {
        grid = GridSpec::centered(grid.shape, grid.spacing);
    }
    grid.validate();
    const ElementType type = kv.count("type") ? parse_element_type(kv["type"]) : ElementType::f32;
    Endian endian = Endian::little;
    if (kv.count("endian")) {
        if (kv["endian"] == "big") {
            endian = Endian::big;
        } else if (kv["endian"] != "little") {
            throw std::runtime_error("sidecar: endian must be little or big");
        }
    }
    return {grid, read_values(path, grid.size(), type, endian)};
}

RawVolume load_raw_volume(const std::filesystem::path& path, const Shape& shape, ElementType type, Endian endian) {
    GridSpec grid = GridSpec::centered(shape, std::vector<double>(shape.size(), 1.0));
    return {grid, read_values(path, grid.size(), type, endian)};
}

}  // namespace mslir
