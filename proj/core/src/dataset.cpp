#include "mslir/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mslir {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

std::uint64_t split_stream(Split split) {
    switch (split) {
        case Split::train: return 1;
        case Split::val: return 2;
        case Split::test: return 3;
    }
    return 0;
}

std::vector<float> simulate_data(std::span<const float> truth, const RayTransform& op, const NoiseConfig& noise,
                                 std::uint64_t noise_seed) {
    switch (noise.kind) {
        case NoiseKind::none: return op.forward<float>(truth);
        case NoiseKind::gaussian_relative: {
            const auto clean = op.forward<float>(truth);
            return add_gaussian(clean, noise.level, noise_seed);
        }
        case NoiseKind::lowdose_poisson: return simulate_lowdose(truth, op, {noise.photons, noise.mu}, noise_seed);
    }
    throw std::logic_error("unknown noise kind");
}

Dataset generate_dataset(const RunConfig& cfg) {
    Dataset ds;
    ds.geometry = cfg.geometry;
    const GridSpec grid = cfg.geometry.grid();
    const RayTransform op(grid, cfg.geometry.geometry());
    auto fill = [&](Split split, int count, std::vector<Sample>& out) {
        const std::uint64_t stream = split_stream(split);
        for (int k = 0; k < count; ++k) {
            Sample s;
            s.phantom_seed = derive_seed(cfg.seed, stream, static_cast<std::uint64_t>(k));
            s.truth = make_phantom(cfg.phantom, grid, s.phantom_seed);
            s.data = simulate_data(s.truth, op, cfg.noise, derive_seed(cfg.seed, stream + 16, static_cast<std::uint64_t>(k)));
            out.push_back(std::move(s));
        }
    };
    fill(Split::train, cfg.dataset.train, ds.train);
    fill(Split::val, cfg.dataset.val, ds.val);
    fill(Split::test, cfg.dataset.test, ds.test);
    return ds;
}

namespace {

std::string sample_name(std::size_t k, const char* what) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu_%s.raw", k, what);
    return buf;
}

GridSpec data_grid(const Shape& shape) { return GridSpec::centered(shape, std::vector<double>(shape.size(), 1.0)); }

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& dir, const std::string& config_hash) {
    fs::create_directories(dir);
    const GridSpec grid = ds.grid();
    const Shape dshape = data_shape(ds.geometry.geometry());
    json manifest{{"format", "mslir-dataset"},
                  {"version", 1},
                  {"config_hash", config_hash},
                  {"geometry", json::parse(to_json(ds.geometry))}};
    json splits = json::object();
    for (Split split : {Split::train, Split::val, Split::test}) {
        const auto& samples = split == Split::train ? ds.train : split == Split::val ? ds.val : ds.test;
        const std::string name(to_string(split));
        fs::create_directories(dir / name);
        json list = json::array();
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const std::string truth = name + "/" + sample_name(k, "truth");
            const std::string data = name + "/" + sample_name(k, "data");
            save_raw_volume(dir / truth, grid, samples[k].truth);
            save_raw_volume(dir / data, data_grid(dshape), samples[k].data);
            list.push_back({{"phantom_seed", samples[k].phantom_seed}, {"truth", truth}, {"data", data}});
        }
        splits[name] = std::move(list);
    }
    manifest["splits"] = std::move(splits);
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("dataset: missing manifest " + (dir / "manifest.json").string());
    json m;
    try {
        m = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("dataset: malformed manifest: ") + e.what());
    }
    if (m.value("format", "") != "mslir-dataset") throw std::runtime_error("dataset: not an mslir dataset manifest");
    Dataset ds;
    ds.geometry = parse_geometry_config(m.at("geometry").dump());
    const GridSpec grid = ds.grid();
    const Shape dshape = data_shape(ds.geometry.geometry());
    for (Split split : {Split::train, Split::val, Split::test}) {
        auto& samples = split == Split::train ? ds.train : split == Split::val ? ds.val : ds.test;
        for (const auto& e : m.at("splits").at(std::string(to_string(split)))) {
            Sample s;
            s.phantom_seed = e.at("phantom_seed").get<std::uint64_t>();
            auto truth = load_raw_volume(dir / e.at("truth").get<std::string>());
            auto data = load_raw_volume(dir / e.at("data").get<std::string>());
            if (truth.grid.shape != grid.shape)
                throw std::runtime_error("dataset: " + e.at("truth").get<std::string>() + " has shape " +
                                         to_string(truth.grid.shape) + ", expected " + to_string(grid.shape));
            if (data.grid.shape != dshape)
                throw std::runtime_error("dataset: " + e.at("data").get<std::string>() + " has shape " +
                                         to_string(data.grid.shape) + ", expected " + to_string(dshape));
            s.truth = std::move(truth.values);
            s.data = std::move(data.values);
            samples.push_back(std::move(s));
        }
    }
    return ds;
}

}  // namespace mslir
