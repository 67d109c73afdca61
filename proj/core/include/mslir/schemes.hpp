#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "mslir/autodiff.hpp"
#include "mslir/filters.hpp"
#include "mslir/linear_op.hpp"
#include "mslir/networks.hpp"
#include "mslir/sequence.hpp"

namespace mslir {

enum class SchemeKind { fbp, unet_post, lgs, ms_lgs, ms_lfgs, dunet };

SchemeKind parse_scheme_kind(std::string_view name);
std::string_view to_string(SchemeKind kind);

/// Kinds built from unrolled residual updates.
bool is_iterative(SchemeKind kind);

struct SchemeConfig {
    SchemeKind kind = SchemeKind::ms_lfgs;
    int n_iterates = 5;  // N + 1; for dunet: multi-scale iterates + the U-Net stage
    BlockKind block = BlockKind::mini_unet;
    int width = 16;
    int unet_width = 16;
    int unet_levels = 4;
    FilterSpec filter{FilterWindow::hann, 0.6};  // A-dagger for the start value and filtered gradients

    /// Kind-specific defaults: the fbp and unet_post baselines use h = 1.
    static SchemeConfig defaults(SchemeKind kind);

    /// Channels of the input set [f_i] fed to each update block.
    int input_channels() const;

    bool operator==(const SchemeConfig&) const = default;
};

/// The discretisation sequence a scheme runs on: one scale for fbp and
/// unet_post, `n_iterates` copies of the finest space for lgs, and halving
/// sequences (halve2d / halve3d_scale0_equal) for the multi-scale kinds.
DiscretisationSequence scheme_sequence(const SchemeConfig& cfg, const GridSpec& grid, const Geometry& geometry);

enum class LossMode {
    none,        // reconstruction only
    end_to_end,  // ||output - truth||^2
    greedy,      // sum over iterates of ||tau-chain(f_i) - truth||^2, inputs detached
};

template <class T>
struct SchemeGraph {
    std::unique_ptr<Graph<T>> graph;
    Var data;    // (1, 1, data shape of the finest space)
    Var truth;   // (1, 1, finest image shape); only with a loss
    Var output;  // (1, 1, finest image shape)
    Var loss;    // scalar; the sum of `iterate_losses` in greedy mode
    std::vector<Var> iterates;        // f_i on its own scale
    std::vector<Var> iterate_losses;  // greedy mode only
};

class Scheme {
public:
    Scheme(SchemeConfig cfg, const GridSpec& grid, const Geometry& geometry);
    /// Runs on an explicit sequence, e.g. ms_lgs on a constant sequence.
    Scheme(SchemeConfig cfg, DiscretisationSequence seq);

    const SchemeConfig& config() const { return cfg_; }
    const DiscretisationSequence& sequence() const { return ops_->sequence(); }
    const OperatorSet& operators() const { return *ops_; }
    int ndim() const { return sequence().ndim(); }
    Shape image_shape() const { return sequence().finest().image.shape; }
    Shape data_shape() const { return mslir::data_shape(sequence().finest().geometry); }

    /// Number of learnable scalars, from the architecture alone.
    std::int64_t param_count() const;

    /// Builds the static graph; parameters are created in `params` on first use.
    template <class T>
    SchemeGraph<T> build(ParamStore<T>* params, LossMode mode = LossMode::none, TraceLog* trace = nullptr) const;

    /// Inference on finest data; returns the finest-grid image.
    template <class T>
    std::vector<T> reconstruct(ParamStore<T>& params, std::span<const T> data, TraceLog* trace = nullptr) const;

    /// Forward ray-transform applications on the finest space recorded in `trace`.
    std::int64_t finest_forward_calls(const TraceLog& trace) const;

private:
    void validate() const;
    std::vector<Injection> injections(const std::vector<Var>& sets) const;

    SchemeConfig cfg_;
    std::shared_ptr<const OperatorSet> ops_;
};

}  // namespace mslir
