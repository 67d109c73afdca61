#include "mslir/schemes.hpp"

#include <bit>
#include <stdexcept>
#include <string>

namespace mslir {

SchemeKind parse_scheme_kind(std::string_view name) {
    if (name == "fbp") return SchemeKind::fbp;
    if (name == "unet_post") return SchemeKind::unet_post;
    if (name == "lgs") return SchemeKind::lgs;
    if (name == "ms_lgs") return SchemeKind::ms_lgs;
    if (name == "ms_lfgs") return SchemeKind::ms_lfgs;
    if (name == "dunet") return SchemeKind::dunet;
    throw std::invalid_argument("unknown scheme '" + std::string(name) +
                                "' (expected fbp, unet_post, lgs, ms_lgs, ms_lfgs or dunet)");
}

std::string_view to_string(SchemeKind kind) {
    switch (kind) {
        case SchemeKind::fbp: return "fbp";
        case SchemeKind::unet_post: return "unet_post";
        case SchemeKind::lgs: return "lgs";
        case SchemeKind::ms_lgs: return "ms_lgs";
        case SchemeKind::ms_lfgs: return "ms_lfgs";
        case SchemeKind::dunet: return "dunet";
    }
    return "?";
}

bool is_iterative(SchemeKind kind) {
    return kind == SchemeKind::lgs || kind == SchemeKind::ms_lgs || kind == SchemeKind::ms_lfgs;
}

SchemeConfig SchemeConfig::defaults(SchemeKind kind) {
    SchemeConfig c;
    c.kind = kind;
    if (kind == SchemeKind::fbp || kind == SchemeKind::unet_post) c.filter.frequency_scaling = 1.0;
    return c;
}

int SchemeConfig::input_channels() const {
    return (kind == SchemeKind::ms_lfgs || kind == SchemeKind::dunet) ? 3 : 2;
}

DiscretisationSequence scheme_sequence(const SchemeConfig& cfg, const GridSpec& grid, const Geometry& geometry) {
    switch (cfg.kind) {
        case SchemeKind::fbp:
        case SchemeKind::unet_post: return build_sequence(grid, geometry, 1, ScalePolicy::halve2d);
        case SchemeKind::lgs: return build_sequence(grid, geometry, cfg.n_iterates, ScalePolicy::constant);
        default: break;
    }
    const ScalePolicy policy = grid.ndim() == 3 ? ScalePolicy::halve3d_scale0_equal : ScalePolicy::halve2d;
    return build_sequence(grid, geometry, cfg.n_iterates, policy);
}

Scheme::Scheme(SchemeConfig cfg, const GridSpec& grid, const Geometry& geometry)
    : Scheme(cfg, scheme_sequence(cfg, grid, geometry)) {}

Scheme::Scheme(SchemeConfig cfg, DiscretisationSequence seq)
    : cfg_(cfg), ops_(std::make_shared<const OperatorSet>(std::move(seq), cfg.filter)) {
    validate();
}

void Scheme::validate() const {
    const int n = sequence().size();
    if (cfg_.kind == SchemeKind::fbp || cfg_.kind == SchemeKind::unet_post) {
        if (n != 1) throw std::invalid_argument(std::string(to_string(cfg_.kind)) + " runs on a single scale");
        return;
    }
    if (cfg_.n_iterates < 1) throw std::invalid_argument("n_iterates must be at least 1");
    if (n != cfg_.n_iterates)
        throw std::invalid_argument("scheme has " + std::to_string(cfg_.n_iterates) + " iterates but the sequence has " +
                                    std::to_string(n) + " scales");
    if (cfg_.kind == SchemeKind::dunet && n < 2) throw std::invalid_argument("dunet needs at least 2 scales");
}

std::vector<Injection> Scheme::injections(const std::vector<Var>& sets) const {
    std::vector<Injection> out;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto factor = static_cast<std::uint64_t>(sequence()[static_cast<int>(i)].image_factor);
        const int level = std::countr_zero(factor);
        if (factor < 2 || !std::has_single_bit(factor) || level > cfg_.unet_levels)
            throw std::invalid_argument("dunet: scale " + std::to_string(i) + " (image factor " + std::to_string(factor) +
                                        ") has no matching U-Net encoder level in [1, " +
                                        std::to_string(cfg_.unet_levels) + "]");
        out.push_back({sets[i], cfg_.input_channels(), level});
    }
    return out;
}

std::int64_t Scheme::param_count() const {
    const int d = ndim();
    const BlockConfig block{cfg_.block, cfg_.width, cfg_.input_channels(), d};
    switch (cfg_.kind) {
        case SchemeKind::fbp: return 0;
        case SchemeKind::unet_post: return unet_param_count({cfg_.unet_width, cfg_.unet_levels, 1, d});
        case SchemeKind::dunet: {
            std::vector<Var> sets(static_cast<std::size_t>(cfg_.n_iterates - 1));
            return (cfg_.n_iterates - 1) * block_param_count(block) +
                   unet_param_count({cfg_.unet_width, cfg_.unet_levels, cfg_.input_channels(), d}, injections(sets));
        }
        default: return cfg_.n_iterates * block_param_count(block);
    }
}

template <class T>
SchemeGraph<T> Scheme::build(ParamStore<T>* params, LossMode mode, TraceLog* trace) const {
    if (mode == LossMode::greedy && !is_iterative(cfg_.kind))
        throw std::invalid_argument("greedy losses need an iterative scheme, got " + std::string(to_string(cfg_.kind)));
    const auto& seq = sequence();
    const auto& ops = *ops_;
    const int N = seq.finest_index();
    const int d = ndim();
    auto batched = [](const Shape& s) {
        Shape b{1, 1};
        b.insert(b.end(), s.begin(), s.end());
        return b;
    };

    SchemeGraph<T> sg;
    sg.graph = std::make_unique<Graph<T>>(params, trace);
    Graph<T>& g = *sg.graph;
    sg.data = g.input(batched(data_shape()), "g");
    if (mode != LossMode::none) sg.truth = g.input(batched(image_shape()), "f_true");

    // [f_i] at scale i: the iterate, its data-fit gradient (scaled by
    // n_cells/||A_i||_F^2) and (lfgs) the filtered gradient, all from one residual
    // A_i f - pi_i g.
    auto input_set = [&](int i, Var ft, Var pg) {
        Var r = g.sub(g.linear(ft, ops.forward<T>(i)), pg);
        std::vector<Var> parts{ft, g.linear(r, ops.scaled_adjoint<T>(i))};
        if (cfg_.input_channels() == 3) parts.push_back(g.linear(r, ops.pseudo_inverse<T>(i)));
        return g.concat(parts);
    };

    if (cfg_.kind == SchemeKind::fbp || cfg_.kind == SchemeKind::unet_post) {
        Var x = g.linear(sg.data, ops.pseudo_inverse<T>(0));
        if (cfg_.kind == SchemeKind::fbp) {
            sg.output = x;
        } else {
            typename Graph<T>::Scope scope(g, "unet");
            sg.output = g.add(x, unet(g, "unet", x, {cfg_.unet_width, cfg_.unet_levels, 1, d}));
        }
    } else {
        const BlockConfig block{cfg_.block, cfg_.width, cfg_.input_channels(), d};
        const int n_updates = cfg_.kind == SchemeKind::dunet ? N : N + 1;
        std::vector<Var> sets;
        Var pg = g.linear(sg.data, ops.project<T>(0));
        Var ft = g.linear(pg, ops.pseudo_inverse<T>(0));
        Var f{};
        for (int i = 0; i <= N; ++i) {
            const std::string name = "iter" + std::to_string(i);
            typename Graph<T>::Scope scope(g, name);
            if (i > 0) {
                Var prev = mode == LossMode::greedy ? g.detach(f) : f;
                ft = g.linear(prev, ops.upsample<T>(i));
                pg = g.linear(sg.data, ops.project<T>(i));
            }
            Var set = input_set(i, ft, pg);
            if (i == n_updates) {
                // dunet: U-Net on [f_N], with [f_0..f_{N-1}] joined at matching encoder depths
                typename Graph<T>::Scope u(g, "unet");
                Var head = unet(g, "unet", set, {cfg_.unet_width, cfg_.unet_levels, cfg_.input_channels(), d},
                                injections(sets));
                f = g.add(ft, head);
                break;
            }
            sets.push_back(set);
            f = residual_update(g, name, ft, set, block);
            sg.iterates.push_back(f);
            if (mode == LossMode::greedy) {
                Var up = f;
                for (int j = i + 1; j <= N; ++j) up = g.linear(up, ops.upsample<T>(j));
                sg.iterate_losses.push_back(g.squared_distance(up, sg.truth));
            }
        }
        sg.output = f;
    }

    if (mode == LossMode::end_to_end) {
        sg.loss = g.squared_distance(sg.output, sg.truth);
    } else if (mode == LossMode::greedy) {
        sg.loss = sg.iterate_losses[0];
        for (std::size_t i = 1; i < sg.iterate_losses.size(); ++i) sg.loss = g.add(sg.loss, sg.iterate_losses[i]);
    }
    g.mark_output(sg.output);
    if (sg.loss.valid()) g.mark_output(sg.loss);
    for (Var l : sg.iterate_losses) g.mark_output(l);
    g.set_training(mode != LossMode::none);
    return sg;
}

template <class T>
std::vector<T> Scheme::reconstruct(ParamStore<T>& params, std::span<const T> data, TraceLog* trace) const {
    auto sg = build<T>(&params, LossMode::none, trace);
    sg.graph->set_input(sg.data, data);
    sg.graph->forward();
    auto out = sg.graph->value(sg.output);
    return {out.begin(), out.end()};
}

std::int64_t Scheme::finest_forward_calls(const TraceLog& trace) const {
    const auto& seq = sequence();
    const auto& fine = seq.finest();
    std::int64_t n = 0;
    for (int i = 0; i < seq.size(); ++i) {
        if (seq[i].image == fine.image && seq[i].geometry == fine.geometry) n += trace.count("A", i);
    }
    return n;
}

#define MSLIR_INSTANTIATE(T)                                                                         \
    template SchemeGraph<T> Scheme::build<T>(ParamStore<T>*, LossMode, TraceLog*) const;             \
    template std::vector<T> Scheme::reconstruct<T>(ParamStore<T>&, std::span<const T>, TraceLog*) const;
MSLIR_INSTANTIATE(float)
MSLIR_INSTANTIATE(double)
#undef MSLIR_INSTANTIATE

}  // namespace mslir
