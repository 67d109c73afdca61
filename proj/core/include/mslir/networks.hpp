#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mslir/autodiff.hpp"

namespace mslir {

enum class BlockKind { resnet, mini_unet };

BlockKind parse_block_kind(std::string_view name);
std::string_view to_string(BlockKind kind);

/// A learned update G: in_channels -> 1 channel, wrapped as f + s * G([f]).
struct BlockConfig {
    BlockKind kind = BlockKind::mini_unet;
    int width = 16;  // 12 for the resnet block
    int in_channels = 2;
    int ndim = 2;

    bool operator==(const BlockConfig&) const = default;
};

/// U-Net with `levels` max-pool steps, widths width * 2^l, residual output.
struct UNetConfig {
    int width = 16;
    int levels = 4;
    int in_channels = 1;
    int ndim = 2;

    bool operator==(const UNetConfig&) const = default;
};

/// One injected set for the dUNet encoder: `channels` input channels joined at
/// encoder level `level` (the level whose resolution matches the set).
struct Injection {
    Var set;
    int channels = 3;
    int level = 1;
};

/// Scalar parameter counts, derived from the architecture alone.
std::int64_t conv_param_count(std::int64_t cin, std::int64_t cout, int kernel, int ndim);
std::int64_t block_param_count(const BlockConfig& cfg);  // includes the step scalar
std::int64_t unet_param_count(const UNetConfig& cfg, const std::vector<Injection>& injections = {});

/// ReLU(conv3(ReLU(conv3(x)))) with `cout` channels; parameters "<prefix>.a.*", "<prefix>.b.*".
template <class T>
Var double_conv(Graph<T>& g, const std::string& prefix, Var x, int cin, int cout, int ndim);

/// G(inputs) -> one channel. Inputs are stacked as channels.
template <class T>
Var update_network(Graph<T>& g, const std::string& prefix, Var inputs, const BlockConfig& cfg);

/// Residual update f + s * G(inputs) with the learnable step "<prefix>.step"
/// initialised to 0.
template <class T>
Var residual_update(Graph<T>& g, const std::string& prefix, Var f, Var inputs, const BlockConfig& cfg);

/// Returns the U-Net head output (one channel, zero-initialised last conv),
/// without the residual term. Injected sets are expanded by a double
/// convolution to the level width and concatenated after the max pool.
template <class T>
Var unet(Graph<T>& g, const std::string& prefix, Var x, const UNetConfig& cfg,
         const std::vector<Injection>& injections = {});

}  // namespace mslir
