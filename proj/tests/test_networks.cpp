#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>

#include "mslir/networks.hpp"
#include "mslir/schemes.hpp"
#include "test_util.hpp"

using namespace mslir;
using mslir::testing::random_vector;

namespace {

Var image_input(Graph<float>& g, std::int64_t channels, std::int64_t n, const std::string& name, std::uint64_t seed) {
    Var x = g.input({1, channels, n, n}, name);
    g.set_input(x, random_vector<float>(static_cast<std::size_t>(channels * n * n), seed));
    return x;
}

std::int64_t built_count(const BlockConfig& cfg, std::int64_t n) {
    ParamStore<float> store(1);
    Graph<float> g(&store);
    Shape s{1, cfg.in_channels};
    for (int d = 0; d < cfg.ndim; ++d) s.push_back(n);
    Var x = g.input(s, "x");
    Shape fs = s;
    fs[1] = 1;
    residual_update(g, "blk", g.input(fs, "f"), x, cfg);
    return store.count();
}

}  // namespace

TEST(ParamCount, ResNetBlockHandCount) {
    // (3*3*2*12 + 12) + (3*3*12*12 + 12) + (1*1*12*1 + 1) + 1 step
    const BlockConfig cfg{BlockKind::resnet, 12, 2, 2};
    EXPECT_EQ(block_param_count(cfg), 228 + 1308 + 13 + 1);
    EXPECT_EQ(block_param_count(cfg), 1550);
    EXPECT_EQ(built_count(cfg, 8), 1550);
}

TEST(ParamCount, BlocksMatchParamStore) {
    for (const BlockConfig& cfg : {BlockConfig{BlockKind::mini_unet, 16, 2, 2}, BlockConfig{BlockKind::mini_unet, 16, 3, 2},
                                   BlockConfig{BlockKind::mini_unet, 12, 3, 3}, BlockConfig{BlockKind::resnet, 12, 3, 3}}) {
        EXPECT_EQ(block_param_count(cfg), built_count(cfg, 4)) << to_string(cfg.kind) << " w=" << cfg.width;
    }
    EXPECT_EQ(block_param_count({BlockKind::mini_unet, 16, 2, 2}), 25538);
}

TEST(ParamCount, UNetMatchesParamStore) {
    for (int ndim : {2, 3}) {
        ParamStore<float> store(1);
        Graph<float> g(&store);
        const std::int64_t n = ndim == 2 ? 16 : 8;
        auto shape = [&](std::int64_t c, std::int64_t size) {
            Shape s{1, c};
            for (int d = 0; d < ndim; ++d) s.push_back(size);
            return s;
        };
        const UNetConfig cfg{4, 3, 3, ndim};
        std::vector<Injection> inj{{g.input(shape(3, n / 2), "a"), 3, 1}, {g.input(shape(3, n / 8), "b"), 3, 3},
                                   {g.input(shape(3, n / 8), "c"), 3, 3}};
        unet(g, "u", g.input(shape(3, n), "x"), cfg, inj);
        EXPECT_EQ(store.count(), unet_param_count(cfg, inj)) << ndim;
    }
}

TEST(ParamCount, SchemeIdentities) {
    const GridSpec grid = GridSpec::centered({64, 64}, {1.0, 1.0});
    const Geometry geom = make_fan_geometry(grid, 32);
    auto count = [&](SchemeKind kind) {
        SchemeConfig cfg = SchemeConfig::defaults(kind);
        Scheme scheme(cfg, grid, geom);
        ParamStore<float> store(3);
        scheme.build<float>(&store);
        EXPECT_EQ(store.count(), scheme.param_count()) << to_string(kind);
        return scheme.param_count();
    };
    const auto lgs = count(SchemeKind::lgs);
    const auto ms_lgs = count(SchemeKind::ms_lgs);
    const auto ms_lfgs = count(SchemeKind::ms_lfgs);
    EXPECT_EQ(lgs, ms_lgs);
    EXPECT_EQ(ms_lfgs - ms_lgs, 5 * 3 * 3 * 1 * 16);
    EXPECT_EQ(ms_lfgs - ms_lgs, 720);
    EXPECT_EQ(count(SchemeKind::fbp), 0);
    count(SchemeKind::unet_post);
    count(SchemeKind::dunet);
}

TEST(Blocks, IdentityAtZeroStep) {
    for (BlockKind kind : {BlockKind::resnet, BlockKind::mini_unet}) {
        ParamStore<float> store(5);
        Graph<float> g(&store);
        Var f = image_input(g, 1, 8, "f", 1);
        Var x = g.concat({f, image_input(g, 2, 8, "grads", 2)});
        Var y = residual_update(g, "blk", f, x, {kind, 6, 3, 2});
        g.mark_output(y);
        g.mark_output(f);
        g.set_training(false);
        g.forward();
        auto a = g.value(y);
        auto b = g.value(f);
        ASSERT_EQ(a.size(), b.size());
        EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(float))) << to_string(kind);
    }
}

TEST(Blocks, ZeroInputZeroOutput) {
    for (BlockKind kind : {BlockKind::resnet, BlockKind::mini_unet}) {
        ParamStore<float> store(5);
        Graph<float> g(&store);
        Var x = g.input({1, 2, 8, 8}, "x");
        g.set_input(x, std::vector<float>(128, 0.0f));
        Var y = update_network(g, "blk", x, {kind, 6, 2, 2});
        g.mark_output(y);
        g.forward();
        for (float v : g.value(y)) EXPECT_EQ(v, 0.0f);
    }
}

TEST(Blocks, ChannelMismatchRejectedAtBuild) {
    ParamStore<float> store(5);
    Graph<float> g(&store);
    Var x = g.input({1, 2, 8, 8}, "x");
    EXPECT_THROW(update_network(g, "blk", x, {BlockKind::resnet, 12, 3, 2}), std::invalid_argument);
    Var f2 = g.input({1, 2, 8, 8}, "f2");
    EXPECT_THROW(residual_update(g, "blk2", f2, x, {BlockKind::resnet, 12, 2, 2}), std::invalid_argument);
}

TEST(Blocks, UNetInjectionLevelChecked) {
    ParamStore<float> store(5);
    Graph<float> g(&store);
    Var x = g.input({1, 3, 16, 16}, "x");
    Var wrong = g.input({1, 3, 4, 4}, "s");
    EXPECT_THROW(unet(g, "u", x, {4, 2, 3, 2}, {{wrong, 3, 1}}), std::invalid_argument);
    EXPECT_THROW(unet(g, "u2", x, {4, 2, 3, 2}, {{wrong, 3, 3}}), std::invalid_argument);
}

TEST(Blocks, UNetHeadStartsAtZero) {
    ParamStore<float> store(5);
    Graph<float> g(&store);
    Var x = image_input(g, 1, 16, "x", 4);
    Var y = unet(g, "u", x, {4, 4, 1, 2});
    g.mark_output(y);
    g.set_training(false);
    g.forward();
    for (float v : g.value(y)) EXPECT_EQ(v, 0.0f);
}

TEST(Blocks, GradientsThroughNetworks) {
    // central differences along random directions, 64-bit
    auto check = [](const std::function<Var(Graph<double>&)>& build, ParamStore<double>& store) {
        auto loss_at = [&](bool grad) {
            Graph<double> g(&store);
            Var y = build(g);
            Var t = g.input(g.shape(y), "t");
            g.set_input(t, random_vector<double>(static_cast<std::size_t>(numel(g.shape(y))), 77));
            Var l = g.squared_distance(y, t);
            g.mark_output(l);
            g.set_training(grad);
            g.forward();
            if (grad) g.backward(l);
            return g.scalar(l);
        };
        store.zero_grad();
        loss_at(true);
        double worst = 0;
        for (std::size_t p = 0; p < store.size(); ++p) {
            auto& prm = store[p];
            const auto dir = random_vector<double>(prm.value.size(), 500 + p);
            double analytic = 0;
            for (std::size_t k = 0; k < dir.size(); ++k) analytic += prm.grad[k] * dir[k];
            const auto base = prm.value;
            const double h = 1e-5;
            for (std::size_t k = 0; k < dir.size(); ++k) prm.value[k] = base[k] + h * dir[k];
            const double lp = loss_at(false);
            for (std::size_t k = 0; k < dir.size(); ++k) prm.value[k] = base[k] - h * dir[k];
            const double lm = loss_at(false);
            prm.value = base;
            const double fd = (lp - lm) / (2 * h);
            worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-8}));
        }
        return worst;
    };
    auto randomise = [](ParamStore<double>& s) {
        for (std::size_t p = 0; p < s.size(); ++p) {
            const auto r = random_vector<double>(s[p].value.size(), 900 + p, -0.5, 0.5);
            s[p].value.assign(r.begin(), r.end());
        }
    };
    {
        ParamStore<double> store(2);
        auto build = [](Graph<double>& g) {
            Var f = g.input({1, 1, 8, 8}, "f");
            g.set_input(f, random_vector<double>(64, 1));
            Var x = g.input({1, 2, 8, 8}, "x");
            g.set_input(x, random_vector<double>(128, 2));
            return residual_update(g, "blk", f, g.concat({f, x}), {BlockKind::mini_unet, 3, 3, 2});
        };
        Graph<double> g0(&store);
        build(g0);
        randomise(store);
        EXPECT_LT(check(build, store), 1e-3);
    }
    {
        ParamStore<double> store(2);
        auto build = [](Graph<double>& g) {
            Var x = g.input({1, 2, 8, 8}, "x");
            g.set_input(x, random_vector<double>(128, 3));
            Var s = g.input({1, 2, 4, 4}, "s");
            g.set_input(s, random_vector<double>(32, 4));
            return unet(g, "u", x, {2, 2, 2, 2}, {{s, 2, 1}});
        };
        Graph<double> g0(&store);
        build(g0);
        randomise(store);
        EXPECT_LT(check(build, store), 1e-3);
    }
}
