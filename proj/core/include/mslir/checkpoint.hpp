#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mslir/optim.hpp"
#include "mslir/schemes.hpp"

namespace mslir {

/// File layout, little endian throughout:
///   "MSLR", u32 version, 32-byte scheme fingerprint,
///   u32 count, then per parameter: u32 name length, name, u32 rank,
///   i64 dims, f32 values;
///   u8 has_optimizer, then f64 beta1, beta2, eps, i64 adam step and the
///   f32 first and second moments of every parameter;
///   i64 training step.
struct Checkpoint {
    struct Blob {
        std::string name;
        Shape shape;
        std::vector<float> values;
        bool operator==(const Blob&) const = default;
    };

    std::array<std::uint8_t, 32> fingerprint{};
    std::vector<Blob> params;
    bool has_optimizer = false;
    AdamConfig adam;
    std::int64_t adam_steps = 0;
    std::vector<std::vector<float>> first_moments, second_moments;
    std::int64_t step = 0;

    bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint make_checkpoint(const SchemeConfig& cfg, const ParamStore<float>& params, const Adam* opt,
                           std::int64_t step);

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws std::runtime_error if the file is unreadable or malformed, or its
/// fingerprint differs from that of `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const SchemeConfig& expected);

/// Creates the scheme's parameters in `params` (build order) and overwrites
/// them with the checkpoint values; names and shapes must match exactly.
/// Restores the optimiser state too when `opt` is given.
void restore(const Checkpoint& ckpt, const Scheme& scheme, ParamStore<float>& params, Adam* opt = nullptr);

}  // namespace mslir
