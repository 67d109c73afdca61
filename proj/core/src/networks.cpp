#include "mslir/networks.hpp"

#include <stdexcept>

namespace mslir {

BlockKind parse_block_kind(std::string_view name) {
    if (name == "resnet") return BlockKind::resnet;
    if (name == "mini_unet") return BlockKind::mini_unet;
    throw std::invalid_argument("unknown block kind '" + std::string(name) + "' (expected resnet or mini_unet)");
}

std::string_view to_string(BlockKind kind) {
    return kind == BlockKind::resnet ? "resnet" : "mini_unet";
}

namespace {

std::int64_t kernel_volume(int kernel, int ndim) {
    std::int64_t v = 1;
    for (int d = 0; d < ndim; ++d) v *= kernel;
    return v;
}

Shape kernel_shape(std::int64_t a, std::int64_t b, int kernel, int ndim) {
    Shape s{a, b};
    for (int d = 0; d < ndim; ++d) s.push_back(kernel);
    return s;
}

template <class T>
Var conv_layer(Graph<T>& g, const std::string& name, Var x, int cin, int cout, int kernel, int ndim,
               Init init = Init::he_uniform) {
    Var w = g.param(name + ".w", kernel_shape(cout, cin, kernel, ndim), init, cin * kernel_volume(kernel, ndim));
    Var b = g.param(name + ".b", {cout}, Init::zeros, 1);
    return g.conv(x, w, b);
}

template <class T>
Var convt_layer(Graph<T>& g, const std::string& name, Var x, int cin, int cout, int ndim) {
    Var w = g.param(name + ".w", kernel_shape(cin, cout, 2, ndim), Init::he_uniform, cin * kernel_volume(2, ndim));
    Var b = g.param(name + ".b", {cout}, Init::zeros, 1);
    return g.conv_transpose2(x, w, b);
}

template <class T>
void check_channels(const Graph<T>& g, Var x, int expected, const std::string& what) {
    const Shape& s = g.shape(x);
    if (s.size() < 3 || s[1] != expected)
        throw std::invalid_argument(what + ": expected " + std::to_string(expected) + " input channels, got " +
                                    to_string(s));
}

}  // namespace

std::int64_t conv_param_count(std::int64_t cin, std::int64_t cout, int kernel, int ndim) {
    return cout * cin * kernel_volume(kernel, ndim) + cout;
}

std::int64_t block_param_count(const BlockConfig& c) {
    const int d = c.ndim;
    const std::int64_t w = c.width;
    if (c.kind == BlockKind::resnet) {
        return conv_param_count(c.in_channels, w, 3, d) + conv_param_count(w, w, 3, d) + conv_param_count(w, 1, 1, d) + 1;
    }
    return conv_param_count(c.in_channels, w, 3, d) + conv_param_count(w, w, 3, d)  // level 0
           + conv_param_count(w, 2 * w, 3, d) + conv_param_count(2 * w, 2 * w, 3, d)  // level 1
           + (2 * w * w * kernel_volume(2, d) + w)                                    // convt
           + conv_param_count(2 * w, w, 3, d) + conv_param_count(w, w, 3, d)          // decoder
           + conv_param_count(w, 1, 1, d) + 1;
}

std::int64_t unet_param_count(const UNetConfig& c, const std::vector<Injection>& injections) {
    const int d = c.ndim;
    auto width = [&](int l) { return static_cast<std::int64_t>(c.width) << l; };
    std::int64_t n = conv_param_count(c.in_channels, width(0), 3, d) + conv_param_count(width(0), width(0), 3, d);
    for (int l = 1; l <= c.levels; ++l) {
        std::int64_t cin = width(l - 1);
        for (const auto& inj : injections) {
            if (inj.level != l) continue;
            n += conv_param_count(inj.channels, width(l), 3, d) + conv_param_count(width(l), width(l), 3, d);
            cin += width(l);
        }
        n += conv_param_count(cin, width(l), 3, d) + conv_param_count(width(l), width(l), 3, d);
    }
    for (int l = c.levels - 1; l >= 0; --l) {
        n += width(l + 1) * width(l) * kernel_volume(2, d) + width(l);
        n += conv_param_count(2 * width(l), width(l), 3, d) + conv_param_count(width(l), width(l), 3, d);
    }
    return n + conv_param_count(width(0), 1, 1, d);
}

template <class T>
Var double_conv(Graph<T>& g, const std::string& prefix, Var x, int cin, int cout, int ndim) {
    Var h = g.relu(conv_layer(g, prefix + ".a", x, cin, cout, 3, ndim));
    return g.relu(conv_layer(g, prefix + ".b", h, cout, cout, 3, ndim));
}

template <class T>
Var update_network(Graph<T>& g, const std::string& prefix, Var inputs, const BlockConfig& cfg) {
    check_channels(g, inputs, cfg.in_channels, prefix);
    const int d = cfg.ndim;
    const int w = cfg.width;
    if (cfg.kind == BlockKind::resnet) {
        Var h = double_conv(g, prefix + ".conv", inputs, cfg.in_channels, w, d);
        return conv_layer(g, prefix + ".out", h, w, 1, 1, d);
    }
    Var skip = double_conv(g, prefix + ".enc0", inputs, cfg.in_channels, w, d);
    Var low = double_conv(g, prefix + ".enc1", g.maxpool2(skip), w, 2 * w, d);
    Var up = convt_layer(g, prefix + ".up", low, 2 * w, w, d);
    Var h = double_conv(g, prefix + ".dec0", g.concat({skip, up}), 2 * w, w, d);
    return conv_layer(g, prefix + ".out", h, w, 1, 1, d);
}

template <class T>
Var residual_update(Graph<T>& g, const std::string& prefix, Var f, Var inputs, const BlockConfig& cfg) {
    check_channels(g, f, 1, prefix + " iterate");
    Var G = update_network(g, prefix, inputs, cfg);
    Var s = g.param(prefix + ".step", {1}, Init::zeros, 1);
    return g.add(f, g.scale(G, s));
}

template <class T>
Var unet(Graph<T>& g, const std::string& prefix, Var x, const UNetConfig& cfg, const std::vector<Injection>& injections) {
    check_channels(g, x, cfg.in_channels, prefix);
    for (const auto& inj : injections) {
        if (inj.level < 1 || inj.level > cfg.levels)
            throw std::invalid_argument(prefix + ": injection level " + std::to_string(inj.level) + " outside [1, " +
                                        std::to_string(cfg.levels) + "]");
        check_channels(g, inj.set, inj.channels, prefix + " injection");
    }
    const int d = cfg.ndim;
    auto width = [&](int l) { return cfg.width << l; };
    std::vector<Var> skips;
    Var h = double_conv(g, prefix + ".enc0", x, cfg.in_channels, width(0), d);
    for (int l = 1; l <= cfg.levels; ++l) {
        skips.push_back(h);
        std::vector<Var> parts{g.maxpool2(h)};
        int cin = width(l - 1);
        int k = 0;
        for (const auto& inj : injections) {
            if (inj.level != l) continue;
            const std::string name = prefix + ".inject" + std::to_string(l) + (k ? "_" + std::to_string(k) : "");
            // concat rejects a set whose resolution does not match this level
            parts.push_back(double_conv(g, name, inj.set, inj.channels, width(l), d));
            cin += width(l);
            ++k;
        }
        Var in = parts.size() == 1 ? parts[0] : g.concat(parts);
        h = double_conv(g, prefix + ".enc" + std::to_string(l), in, cin, width(l), d);
    }
    for (int l = cfg.levels - 1; l >= 0; --l) {
        Var up = convt_layer(g, prefix + ".up" + std::to_string(l), h, width(l + 1), width(l), d);
        h = double_conv(g, prefix + ".dec" + std::to_string(l), g.concat({skips[static_cast<std::size_t>(l)], up}),
                        2 * width(l), width(l), d);
    }
    return conv_layer(g, prefix + ".head", h, width(0), 1, 1, d, Init::zeros);
}

#define MSLIR_INSTANTIATE(T)                                                                                   \
    template Var double_conv<T>(Graph<T>&, const std::string&, Var, int, int, int);                            \
    template Var update_network<T>(Graph<T>&, const std::string&, Var, const BlockConfig&);                    \
    template Var residual_update<T>(Graph<T>&, const std::string&, Var, Var, const BlockConfig&);              \
    template Var unet<T>(Graph<T>&, const std::string&, Var, const UNetConfig&, const std::vector<Injection>&);
MSLIR_INSTANTIATE(float)
MSLIR_INSTANTIATE(double)
#undef MSLIR_INSTANTIATE

}  // namespace mslir
