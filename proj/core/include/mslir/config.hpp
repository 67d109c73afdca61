#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mslir/optim.hpp"
#include "mslir/schemes.hpp"
#include "mslir/simulation.hpp"

namespace mslir {

struct GeometryConfig {
    std::string type = "fan";  // fan | cone
    Shape shape{128, 128};
    std::vector<double> spacing{1.0, 1.0};
    std::int64_t angles = 128;
    double source_axis_dist = 500.0;
    double axis_detector_dist = 500.0;

    GridSpec grid() const;
    Geometry geometry() const;
    /// Same physical extent and distances at `n` cells per axis.
    GeometryConfig resized(std::int64_t n, std::int64_t angles) const;
    bool operator==(const GeometryConfig&) const = default;
};

enum class NoiseKind { none, gaussian_relative, lowdose_poisson };

struct NoiseConfig {
    NoiseKind kind = NoiseKind::gaussian_relative;
    double level = 0.05;
    double photons = 8000;
    double mu = 0.2;
    bool operator==(const NoiseConfig&) const = default;
};

struct DatasetConfig {
    std::string path;  // empty: <output_dir>/dataset
    int train = 200;
    int val = 20;
    int test = 20;
    bool operator==(const DatasetConfig&) const = default;
};

struct TrainConfig {
    std::int64_t steps = 20000;
    double lr = 1e-3;
    AdamConfig adam;
    std::int64_t eval_every = 500;
    LossMode loss = LossMode::end_to_end;

    /// 20,000 steps in 2D, 10,000 in 3D.
    static std::int64_t default_steps(int ndim) { return ndim == 3 ? 10000 : 20000; }
    bool operator==(const TrainConfig&) const = default;
};

struct ModelConfig {
    std::string checkpoint;  // empty: <output_dir>/checkpoint.mslr
    bool operator==(const ModelConfig&) const = default;
};

struct ReconstructConfig {
    std::string input;  // raw data file with sidecar
    double window_lo = 0.0;
    double window_hi = 1.0;
    bool operator==(const ReconstructConfig&) const = default;
};

struct BenchConfig {
    std::vector<std::int64_t> sizes{64, 128, 256};
    std::vector<SchemeKind> schemes{SchemeKind::lgs, SchemeKind::ms_lfgs};
    std::int64_t angles = 0;  // 0: as many angles as cells per axis
    int repeats = 5;
    bool operator==(const BenchConfig&) const = default;
};

struct RobustnessRun {
    SchemeConfig scheme;
    std::string checkpoint;  // empty for fbp
    bool operator==(const RobustnessRun&) const = default;
};

struct RobustnessConfig {
    std::vector<double> levels{0, 5, 10, 15, 20};  // additional Gaussian noise, percent
    std::vector<RobustnessRun> runs;
    bool operator==(const RobustnessConfig&) const = default;
};

struct RunConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    GeometryConfig geometry;
    EllipsePhantomSpec phantom;
    NoiseConfig noise;
    DatasetConfig dataset;
    SchemeConfig scheme;
    TrainConfig train;
    ModelConfig model;
    ReconstructConfig reconstruct;
    BenchConfig bench;
    RobustnessConfig robustness;

    std::filesystem::path dataset_dir() const;
    std::filesystem::path checkpoint_path() const;
    bool operator==(const RunConfig&) const = default;
};

/// Strict parse: unknown keys, wrong types and invalid values throw
/// std::invalid_argument naming the offending key. Absent keys take defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical form: every key present, keys sorted, fixed indentation.
std::string to_json(const RunConfig& cfg);
std::string to_json(const SchemeConfig& cfg);
SchemeConfig parse_scheme_config(const std::string& json_text);
std::string to_json(const GeometryConfig& cfg);
GeometryConfig parse_geometry_config(const std::string& json_text);

/// SHA-256 digests.
std::array<std::uint8_t, 32> sha256(std::string_view bytes);
std::string to_hex(std::span<const std::uint8_t> bytes);

/// Hex SHA-256 of the canonical RunConfig JSON.
std::string config_hash(const RunConfig& cfg);
/// SHA-256 of the canonical scheme JSON; identifies a parameter layout.
std::array<std::uint8_t, 32> scheme_fingerprint(const SchemeConfig& cfg);

}  // namespace mslir
