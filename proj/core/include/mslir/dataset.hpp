#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mslir/config.hpp"

namespace mslir {

struct Sample {
    std::uint64_t phantom_seed = 0;
    std::vector<float> truth;  // finest image
    std::vector<float> data;   // noisy finest data
};

struct Dataset {
    GeometryConfig geometry;
    std::vector<Sample> train, val, test;

    GridSpec grid() const { return geometry.grid(); }
};

enum class Split { train, val, test };
std::string_view to_string(Split split);

/// Seed stream of a split; sample k of a split uses the phantom seed
/// derive_seed(run seed, stream, k) and a noise seed from stream + 16.
std::uint64_t split_stream(Split split);

/// Forward-simulates one phantom with the configured noise model.
std::vector<float> simulate_data(std::span<const float> truth, const RayTransform& op, const NoiseConfig& noise,
                                 std::uint64_t noise_seed);

/// Generates all splits from `cfg` (phantoms, geometry, noise, counts, seed).
Dataset generate_dataset(const RunConfig& cfg);

/// Directory layout: manifest.json plus <split>/<k>_truth.raw and
/// <k>_data.raw (f32 little endian, with sidecars).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir, const std::string& config_hash);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mslir
