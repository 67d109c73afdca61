#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mslir/simulation.hpp"
#include "test_util.hpp"

using namespace mslir;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mslir_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(Phantom, NoEllipsesGivesZero) {
    EllipsePhantomSpec spec;
    spec.min_count = spec.max_count = 0;
    const auto f = make_phantom(spec, GridSpec::centered({32, 32}, {1, 1}), 1);
    for (float v : f) EXPECT_EQ(v, 0.0f);
}

TEST(Phantom, CentredEllipseCoverage) {
    const GridSpec grid = GridSpec::centered({64, 64}, {1, 1});
    Ellipse e;
    e.axes[0] = 0.5;  // 16 px in x
    e.axes[1] = 0.3;  // 9.6 px in y
    e.angle = 0;
    e.density = 1;
    const auto f = rasterize(std::span<const Ellipse>(&e, 1), grid, 4, 1.0);
    int inside = 0, outside = 0, edge = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            // pixel rectangle in units of the semi-axes
            const double x0 = (x - 32) / 32.0 / 0.5, x1 = (x - 31) / 32.0 / 0.5;
            const double y0 = (y - 32) / 32.0 / 0.3, y1 = (y - 31) / 32.0 / 0.3;
            const double fx = std::max(std::abs(x0), std::abs(x1)), fy = std::max(std::abs(y0), std::abs(y1));
            const double nx = (x0 <= 0 && x1 >= 0) ? 0 : std::min(std::abs(x0), std::abs(x1));
            const double ny = (y0 <= 0 && y1 >= 0) ? 0 : std::min(std::abs(y0), std::abs(y1));
            const float v = f[static_cast<std::size_t>(y * 64 + x)];
            if (fx * fx + fy * fy <= 1) {
                EXPECT_EQ(v, 1.0f) << x << "," << y;
                ++inside;
            } else if (nx * nx + ny * ny > 1) {
                EXPECT_EQ(v, 0.0f) << x << "," << y;
                ++outside;
            } else {
                EXPECT_GE(v, 0.0f);
                EXPECT_LE(v, 1.0f);
                ++edge;
            }
        }
    EXPECT_GT(inside, 300);
    EXPECT_GT(outside, 3000);
    EXPECT_GT(edge, 20);
    double area = 0;
    for (float v : f) area += v;
    EXPECT_NEAR(area, 3.14159265358979 * 16 * 9.6, 0.01 * 3.14159265358979 * 16 * 9.6);
}

TEST(Phantom, EllipsoidVolume3D) {
    const GridSpec grid = GridSpec::centered({32, 32, 32}, {1, 1, 1});
    Ellipse e;
    e.axes[0] = 0.5;
    e.axes[1] = 0.4;
    e.axes[2] = 0.3;
    e.angle = 0.7;
    const auto f = rasterize(std::span<const Ellipse>(&e, 1), grid, 4, 1.0);
    double vol = 0;
    for (float v : f) vol += v;
    const double expected = 4.0 / 3.0 * 3.14159265358979 * 8 * 6.4 * 4.8;
    EXPECT_NEAR(vol, expected, 0.02 * expected);
    EXPECT_EQ(f[static_cast<std::size_t>((16 * 32 + 16) * 32 + 16)], 1.0f);
}

TEST(Phantom, SeededAndClipped) {
    EllipsePhantomSpec spec;
    const GridSpec grid = GridSpec::centered({48, 48}, {1, 1});
    const auto a = make_phantom(spec, grid, 42);
    const auto b = make_phantom(spec, grid, 42);
    const auto c = make_phantom(spec, grid, 43);
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(float)));
    EXPECT_NE(a, c);
    for (float v : a) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, spec.v_max);
    }
}

TEST(Noise, GaussianLevelZeroIsIdentity) {
    const auto g = mslir::testing::random_vector<float>(1000, 1);
    EXPECT_EQ(add_gaussian(g, 0.0, 5), g);
    EXPECT_THROW(add_gaussian(g, -0.1, 5), std::invalid_argument);
}

TEST(Noise, GaussianStatistics) {
    const auto g = mslir::testing::random_vector<float>(100000, 2, 0.5, 3.0);
    double mean_abs = 0;
    for (float v : g) mean_abs += std::abs(v);
    mean_abs /= g.size();
    for (double level : {0.05, 0.2}) {
        const auto n = add_gaussian(g, level, 9);
        double s = 0, s2 = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double d = static_cast<double>(n[k]) - g[k];
            s += d;
            s2 += d * d;
        }
        const double mean = s / g.size();
        const double sd = std::sqrt(s2 / g.size() - mean * mean);
        EXPECT_NEAR(sd, level * mean_abs, 0.05 * level * mean_abs) << level;
    }
    EXPECT_EQ(add_gaussian(g, 0.05, 3), add_gaussian(g, 0.05, 3));
    EXPECT_NE(add_gaussian(g, 0.05, 3), add_gaussian(g, 0.05, 4));
}

TEST(LowDose, ZeroImageGivesZeroData) {
    const GridSpec grid = GridSpec::centered({16, 16}, {1, 1});
    const RayTransform op(grid, make_fan_geometry(grid, 8));
    const auto d = simulate_lowdose(std::vector<float>(256, 0.0f), op, {}, 1, true);
    for (float v : d) EXPECT_EQ(v, 0.0f);
    std::vector<float> neg(256, 0.0f);
    neg[3] = -1e-3f;
    EXPECT_THROW(simulate_lowdose(neg, op, {}, 1), std::invalid_argument);
}

TEST(LowDose, NoiselessRoundTrip) {
    const auto p = mslir::testing::random_vector<double>(5000, 3, 0.0, 300.0);
    const LowDoseModel m{8000, 0.2};
    const auto back = linearise(expected_counts(p, m), m);
    EXPECT_LT(mslir::testing::rel_max_diff<double>(back, p), 1e-6);
}

TEST(LowDose, PoissonMatchesDeltaMethod) {
    // var(linearised) ~ 100 e^{mu p / 10} / (N0 mu^2) in (density mm)^2
    const GridSpec grid = GridSpec::centered({64, 64}, {1, 1});
    const RayTransform op(grid, make_fan_geometry(grid, 90));
    EllipsePhantomSpec spec;
    const auto f = make_phantom(spec, grid, 7);
    const std::vector<double> fd(f.begin(), f.end());
    const auto p = op.forward<double>(std::span<const double>(fd));
    const LowDoseModel m{8000, 0.2};
    double sz = 0, sz2 = 0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto d = simulate_lowdose(f, op, m, seed);
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double var = 100.0 * std::exp(m.mu * p[k] / 10.0) / (m.photons * m.mu * m.mu);
            const double z = (d[k] - p[k]) / std::sqrt(var);
            sz += z;
            sz2 += z * z;
            ++n;
        }
    }
    const double mean = sz / n;
    const double var = sz2 / n - mean * mean;
    EXPECT_LT(std::abs(mean), 0.05);
    EXPECT_NEAR(var, 1.0, 0.2);
}

TEST(RawVolume, KnownBytes) {
    const auto dir = temp_dir("raw_known");
    const auto path = dir / "v.raw";
    {
        const float vals[4] = {1.0f, -2.5f, 3.25f, 1e-3f};
        unsigned char bytes[16];
        for (int i = 0; i < 4; ++i) {
            std::uint32_t u;
            std::memcpy(&u, &vals[i], 4);
            for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(u >> (8 * b));
        }
        std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes), 16);
        std::ofstream(sidecar_path(path)) << "shape=2,2\nspacing=0.5,0.5\ntype=f32\nendian=little\n";
    }
    const auto v = load_raw_volume(path);
    EXPECT_EQ(v.grid.shape, (Shape{2, 2}));
    EXPECT_EQ(v.grid.spacing, (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(v.values, (std::vector<float>{1.0f, -2.5f, 3.25f, 1e-3f}));
    const auto w = load_raw_volume(path, {2, 2}, ElementType::f32, Endian::little);
    EXPECT_EQ(w.values, v.values);
}

TEST(RawVolume, WrongSizeNamesBothCounts) {
    const auto dir = temp_dir("raw_size");
    const auto path = dir / "v.raw";
    std::ofstream(path, std::ios::binary).write("abcdefghij", 10);
    try {
        load_raw_volume(path, {2, 2}, ElementType::f32, Endian::little);
        FAIL() << "size mismatch accepted";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("10"), std::string::npos) << msg;
        EXPECT_NE(msg.find("16"), std::string::npos) << msg;
    }
    EXPECT_THROW(load_raw_volume(dir / "missing.raw"), std::runtime_error);
}

TEST(RawVolume, RoundTripIsBitIdentical) {
    const auto dir = temp_dir("raw_round");
    const GridSpec grid = GridSpec::centered({3, 4, 5}, {0.5, 0.25, 2.0});
    const auto vals = mslir::testing::random_vector<float>(60, 11, -100, 100);
    for (Endian e : {Endian::little, Endian::big}) {
        const auto path = dir / (e == Endian::little ? "le.raw" : "be.raw");
        save_raw_volume(path, grid, vals, ElementType::f32, e);
        const auto v = load_raw_volume(path);
        EXPECT_EQ(v.grid, grid);
        EXPECT_EQ(0, std::memcmp(v.values.data(), vals.data(), vals.size() * sizeof(float)));
        const auto p2 = dir / "again.raw";
        save_raw_volume(p2, v.grid, v.values, ElementType::f32, e);
        std::ifstream a(path, std::ios::binary), b(p2, std::ios::binary);
        EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
    }
    std::vector<float> ints{0, 1, 65535, 300};
    const GridSpec g2 = GridSpec::centered({2, 2}, {1, 1});
    save_raw_volume(dir / "u16.raw", g2, ints, ElementType::u16, Endian::big);
    EXPECT_EQ(load_raw_volume(dir / "u16.raw").values, ints);
    EXPECT_EQ(std::filesystem::file_size(dir / "u16.raw"), 8u);
}
