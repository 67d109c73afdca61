#include "mslir/commands.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "mslir/cost.hpp"
#include "mslir/pgm.hpp"

namespace mslir {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class DirLock {
public:
    explicit DirLock(const fs::path& dir) {
        fs::create_directories(dir);
        const auto path = dir / ".lock";
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw std::runtime_error("cannot open lock file " + path.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw std::runtime_error("output directory " + dir.string() + " is in use by another mslir process");
        }
    }
    ~DirLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    int fd_ = -1;
};

void record_manifest(const RunConfig& cfg, const std::string& command, const std::vector<fs::path>& files) {
    const fs::path out(cfg.output_dir);
    const auto path = out / "manifest.json";
    json m = json::object();
    if (std::ifstream in(path); in) {
        try {
            m = json::parse(in);
        } catch (const json::parse_error&) {
            m = json::object();
        }
    }
    json list = json::array();
    for (const auto& f : files) list.push_back(fs::proximate(f, out).generic_string());
    m["commands"][command] = {{"config_hash", config_hash(cfg)}, {"files", list}};
    std::ofstream(path) << m.dump(2) << "\n";
}

std::ofstream open_csv(const fs::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return os;
}

Dataset require_dataset(const RunConfig& cfg) {
    const auto dir = cfg.dataset_dir();
    if (!fs::exists(dir / "manifest.json"))
        throw std::runtime_error("no dataset at " + dir.string() + "; run 'mslir simulate' first");
    Dataset ds = load_dataset(dir);
    if (ds.geometry != cfg.geometry)
        throw std::runtime_error("dataset at " + dir.string() + " was generated for a different geometry");
    return ds;
}

}  // namespace

std::uint64_t init_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, 100, 0); }
std::uint64_t sampling_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, 101, 0); }

Scheme make_scheme(const RunConfig& cfg, const SchemeConfig& scheme) {
    return Scheme(scheme, cfg.geometry.grid(), cfg.geometry.geometry());
}

void load_params(const Scheme& scheme, const fs::path& checkpoint, ParamStore<float>& params) {
    if (scheme.config().kind == SchemeKind::fbp && !fs::exists(checkpoint)) return;
    if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint " + checkpoint.string() + " does not exist");
    restore(load_checkpoint(checkpoint, scheme.config()), scheme, params);
}

fs::path cmd_simulate(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    const auto dir = cfg.dataset_dir();
    fs::remove_all(dir);
    save_dataset(generate_dataset(cfg), dir, config_hash(cfg));
    record_manifest(cfg, "simulate", {dir / "manifest.json"});
    return dir;
}

TrainResult cmd_train(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    const Dataset ds = require_dataset(cfg);
    const Scheme scheme = make_scheme(cfg, cfg.scheme);
    ParamStore<float> params(init_seed(cfg));
    TrainResult res = train(scheme, ds, cfg.train, sampling_seed(cfg), params);
    const fs::path out(cfg.output_dir);
    const auto ckpt = cfg.checkpoint_path();
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
    save_checkpoint(ckpt, res.final_checkpoint);
    save_checkpoint(out / "best.mslr", res.best_checkpoint);
    {
        auto os = open_csv(out / "train_log.csv");
        write_log_csv(os, res.log, config_hash(cfg));
    }
    std::ofstream(out / "run_config.json") << to_json(cfg);
    record_manifest(cfg, "train", {ckpt, out / "best.mslr", out / "train_log.csv", out / "run_config.json"});
    return res;
}

fs::path cmd_reconstruct(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    if (cfg.reconstruct.input.empty()) throw std::runtime_error("reconstruct.input is not set");
    const Scheme scheme = make_scheme(cfg, cfg.scheme);
    ParamStore<float> params(init_seed(cfg));
    load_params(scheme, cfg.checkpoint_path(), params);
    const RawVolume in = load_raw_volume(cfg.reconstruct.input);
    if (in.grid.shape != scheme.data_shape())
        throw std::runtime_error("reconstruct: input has shape " + to_string(in.grid.shape) + ", the geometry needs " +
                                 to_string(scheme.data_shape()));
    const auto image = scheme.reconstruct<float>(params, in.values);
    const fs::path out(cfg.output_dir);
    const GridSpec grid = cfg.geometry.grid();
    save_raw_volume(out / "recon.raw", grid, image);
    write_pgm(out / "recon.pgm", image, grid.shape, cfg.reconstruct.window_lo, cfg.reconstruct.window_hi);
    record_manifest(cfg, "reconstruct", {out / "recon.raw", sidecar_path(out / "recon.raw"), out / "recon.pgm"});
    return out / "recon.raw";
}

MetricSummary cmd_evaluate(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    const Dataset ds = require_dataset(cfg);
    if (ds.test.empty()) throw std::runtime_error("evaluate: the test split is empty");
    const Scheme scheme = make_scheme(cfg, cfg.scheme);
    ParamStore<float> params(init_seed(cfg));
    load_params(scheme, cfg.checkpoint_path(), params);
    const auto recons = reconstruct_all(scheme, params, ds.test);
    const MetricSummary m = summarise(recons, ds.test, scheme.image_shape());
    const fs::path out(cfg.output_dir);
    const std::string hash = config_hash(cfg);
    {
        auto os = open_csv(out / "metrics.csv");
        os << "scheme,split,count,psnr_mean,psnr_std,ssim_mean,ssim_std,config_hash\n";
        os << to_string(cfg.scheme.kind) << ",test," << m.count << ',' << format_double(m.psnr_mean) << ','
           << format_double(m.psnr_std) << ',' << format_double(m.ssim_mean) << ',' << format_double(m.ssim_std) << ','
           << hash << '\n';
    }
    {
        auto os = open_csv(out / "metrics_samples.csv");
        os << "index,phantom_seed,psnr,ssim,config_hash\n";
        for (std::size_t k = 0; k < m.count; ++k)
            os << k << ',' << ds.test[k].phantom_seed << ',' << format_double(m.psnr[k]) << ','
               << format_double(m.ssim[k]) << ',' << hash << '\n';
    }
    record_manifest(cfg, "evaluate", {out / "metrics.csv", out / "metrics_samples.csv"});
    return m;
}

fs::path cmd_bench_scaling(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    const fs::path out(cfg.output_dir);
    const std::string hash = config_hash(cfg);
    auto os = open_csv(out / "resources.csv");
    os << "scheme,n,peak_bytes,finest_op_calls,wall_ms,config_hash\n";
    for (auto n : cfg.bench.sizes) {
        const GeometryConfig geo = cfg.geometry.resized(n, cfg.bench.angles > 0 ? cfg.bench.angles : n);
        const GridSpec grid = geo.grid();
        const Geometry geometry = geo.geometry();
        const auto truth = make_phantom(cfg.phantom, grid, derive_seed(cfg.seed, 103, static_cast<std::uint64_t>(n)));
        const auto data = simulate_data(truth, RayTransform(grid, geometry), cfg.noise,
                                        derive_seed(cfg.seed, 104, static_cast<std::uint64_t>(n)));
        for (auto kind : cfg.bench.schemes) {
            SchemeConfig sc = SchemeConfig::defaults(kind);
            sc.n_iterates = is_iterative(kind) || kind == SchemeKind::dunet ? cfg.scheme.n_iterates : 1;
            sc.block = cfg.scheme.block;
            sc.width = cfg.scheme.width;
            sc.unet_width = cfg.scheme.unet_width;
            sc.unet_levels = cfg.scheme.unet_levels;
            const Scheme scheme(sc, grid, geometry);
            ParamStore<float> params(init_seed(cfg));
            const auto r = measure_resources(scheme, params, data, truth, cfg.bench.repeats);
            os << to_string(kind) << ',' << n << ',' << r.peak_bytes << ',' << r.finest_op_calls << ','
               << format_double(r.wall_ms) << ',' << hash << '\n';
            os.flush();
        }
    }
    record_manifest(cfg, "bench-scaling", {out / "resources.csv"});
    return out / "resources.csv";
}

RobustnessTable cmd_robustness(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    const Dataset ds = require_dataset(cfg);
    std::vector<RobustnessRun> runs = cfg.robustness.runs;
    if (runs.empty()) runs.push_back({cfg.scheme, cfg.checkpoint_path().string()});
    std::vector<std::unique_ptr<Scheme>> schemes;
    std::vector<std::unique_ptr<ParamStore<float>>> stores;
    std::vector<Reconstructor> recs;
    for (const auto& run : runs) {
        schemes.push_back(std::make_unique<Scheme>(make_scheme(cfg, run.scheme)));
        stores.push_back(std::make_unique<ParamStore<float>>(init_seed(cfg)));
        load_params(*schemes.back(), run.checkpoint, *stores.back());
        const Scheme* s = schemes.back().get();
        ParamStore<float>* p = stores.back().get();
        recs.push_back({std::string(to_string(run.scheme.kind)),
                        [s, p](std::span<const float> g) { return s->reconstruct<float>(*p, g); }});
    }
    const auto table = robustness_sweep(ds.test, recs, cfg.robustness.levels, derive_seed(cfg.seed, 105, 0));
    const fs::path out(cfg.output_dir);
    const std::string hash = config_hash(cfg);
    auto os = open_csv(out / "robustness.csv");
    os << "scheme,level_percent,mean_psnr,psnr_drop,config_hash\n";
    for (std::size_t s = 0; s < table.schemes.size(); ++s)
        for (std::size_t l = 0; l < table.levels.size(); ++l)
            os << table.schemes[s] << ',' << format_double(table.levels[l]) << ',' << format_double(table.psnr[s][l])
               << ',' << format_double(table.psnr[s][0] - table.psnr[s][l]) << ',' << hash << '\n';
    os.close();
    record_manifest(cfg, "robustness", {out / "robustness.csv"});
    return table;
}

}  // namespace mslir
