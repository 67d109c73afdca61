#include "mslir/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mslir {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& key, const std::string& what) {
    throw std::invalid_argument("config: '" + key + "' " + what);
}

// Object view that remembers which keys were read; finish() rejects the rest.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "must be an object");
    }

    const json* find(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string key(const char* k) const { return path_.empty() ? k : path_ + "." + k; }

    void read(const char* k, std::string& out) {
        if (auto v = find(k)) {
            if (!v->is_string()) fail(key(k), "must be a string");
            out = v->get<std::string>();
        }
    }
    void read(const char* k, double& out) {
        if (auto v = find(k)) {
            if (!v->is_number()) fail(key(k), "must be a number");
            out = v->get<double>();
        }
    }
    void read(const char* k, std::int64_t& out) {
        if (auto v = find(k)) {
            if (!v->is_number_integer()) fail(key(k), "must be an integer");
            out = v->get<std::int64_t>();
        }
    }
    void read(const char* k, int& out) {
        std::int64_t t = out;
        read(k, t);
        out = static_cast<int>(t);
    }
    void read(const char* k, std::uint64_t& out) {
        if (auto v = find(k)) {
            if (!v->is_number_unsigned()) fail(key(k), "must be a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    template <class T>
    void read(const char* k, std::vector<T>& out) {
        if (auto v = find(k)) {
            if (!v->is_array()) fail(key(k), "must be an array");
            std::vector<T> r;
            for (const auto& e : *v) {
                if constexpr (std::is_integral_v<T>) {
                    if (!e.is_number_integer()) fail(key(k), "must hold integers");
                } else {
                    if (!e.is_number()) fail(key(k), "must hold numbers");
                }
                r.push_back(e.get<T>());
            }
            out = std::move(r);
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) fail(path_.empty() ? k : path_ + "." + k, "is not a known key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
auto parse_enum(Reader& r, const char* k, F parse, decltype(parse(std::string_view{})) fallback) {
    std::string s;
    r.read(k, s);
    if (s.empty()) return fallback;
    try {
        return parse(s);
    } catch (const std::exception& e) {
        fail(r.key(k), std::string("has an invalid value: ") + e.what());
    }
}

NoiseKind parse_noise_kind(std::string_view s) {
    if (s == "none") return NoiseKind::none;
    if (s == "gaussian_relative") return NoiseKind::gaussian_relative;
    if (s == "lowdose_poisson") return NoiseKind::lowdose_poisson;
    throw std::invalid_argument("unknown noise kind '" + std::string(s) + "'");
}
std::string_view to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::none: return "none";
        case NoiseKind::gaussian_relative: return "gaussian_relative";
        case NoiseKind::lowdose_poisson: return "lowdose_poisson";
    }
    return "?";
}
LossMode parse_loss(std::string_view s) {
    if (s == "end_to_end") return LossMode::end_to_end;
    if (s == "greedy") return LossMode::greedy;
    throw std::invalid_argument("unknown loss '" + std::string(s) + "'");
}
std::string_view to_string(LossMode m) {
    switch (m) {
        case LossMode::none: return "none";
        case LossMode::end_to_end: return "end_to_end";
        case LossMode::greedy: return "greedy";
    }
    return "?";
}

GeometryConfig geometry_from(const json& j, const std::string& path) {
    Reader g(j, path);
    GeometryConfig gc;
    g.read("type", gc.type);
    g.read("shape", gc.shape);
    g.read("spacing", gc.spacing);
    g.read("angles", gc.angles);
    g.read("source_axis_dist", gc.source_axis_dist);
    g.read("axis_detector_dist", gc.axis_detector_dist);
    g.finish();
    if (gc.type != "fan" && gc.type != "cone") fail(path + ".type", "must be 'fan' or 'cone'");
    const std::size_t nd = gc.type == "fan" ? 2 : 3;
    if (gc.shape.size() != nd) fail(path + ".shape", "needs " + std::to_string(nd) + " entries");
    if (!j.contains("spacing")) gc.spacing.assign(nd, 1.0);
    if (gc.spacing.size() != nd) fail(path + ".spacing", "needs " + std::to_string(nd) + " entries");
    if (gc.angles < 1) fail(path + ".angles", "must be positive");
    return gc;
}

json geometry_json(const GeometryConfig& g) {
    return json{{"type", g.type},
                {"shape", g.shape},
                {"spacing", g.spacing},
                {"angles", g.angles},
                {"source_axis_dist", g.source_axis_dist},
                {"axis_detector_dist", g.axis_detector_dist}};
}

SchemeConfig scheme_from(const json& j, const std::string& path) {
    Reader r(j, path);
    const SchemeKind kind = parse_enum(r, "kind", parse_scheme_kind, SchemeKind::ms_lfgs);
    SchemeConfig c = SchemeConfig::defaults(kind);
    r.read("n_iterates", c.n_iterates);
    c.block = parse_enum(r, "block", parse_block_kind, c.block);
    r.read("width", c.width);
    r.read("unet_width", c.unet_width);
    r.read("unet_levels", c.unet_levels);
    if (auto f = r.find("filter")) {
        Reader fr(*f, r.key("filter"));
        c.filter.window = parse_enum(fr, "window", parse_filter_window, c.filter.window);
        fr.read("frequency_scaling", c.filter.frequency_scaling);
        fr.finish();
    }
    r.finish();
    if (c.n_iterates < 1 || c.width < 1 || c.unet_width < 1 || c.unet_levels < 1)
        fail(path, "has non-positive sizes");
    try {
        c.filter.validate();
    } catch (const std::exception& e) {
        fail(path + ".filter", e.what());
    }
    return c;
}

json scheme_json(const SchemeConfig& c) {
    return json{{"kind", to_string(c.kind)},
                {"n_iterates", c.n_iterates},
                {"block", to_string(c.block)},
                {"width", c.width},
                {"unet_width", c.unet_width},
                {"unet_levels", c.unet_levels},
                {"filter", {{"window", to_string(c.filter.window)}, {"frequency_scaling", c.filter.frequency_scaling}}}};
}

json run_json(const RunConfig& c) {
    json runs = json::array();
    for (const auto& run : c.robustness.runs) runs.push_back({{"scheme", scheme_json(run.scheme)}, {"checkpoint", run.checkpoint}});
    json schemes = json::array();
    for (auto k : c.bench.schemes) schemes.push_back(to_string(k));
    const auto& p = c.phantom;
    return json{
        {"name", c.name},
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"geometry", geometry_json(c.geometry)},
        {"phantom",
         {{"min_count", p.min_count},
          {"max_count", p.max_count},
          {"max_center", p.max_center},
          {"min_axis", p.min_axis},
          {"max_axis", p.max_axis},
          {"min_density", p.min_density},
          {"max_density", p.max_density},
          {"v_max", p.v_max},
          {"supersample", p.supersample}}},
        {"noise",
         {{"kind", to_string(c.noise.kind)},
          {"level", c.noise.level},
          {"photons", c.noise.photons},
          {"mu", c.noise.mu}}},
        {"dataset",
         {{"path", c.dataset.path}, {"train", c.dataset.train}, {"val", c.dataset.val}, {"test", c.dataset.test}}},
        {"scheme", scheme_json(c.scheme)},
        {"train",
         {{"steps", c.train.steps},
          {"lr", c.train.lr},
          {"beta1", c.train.adam.beta1},
          {"beta2", c.train.adam.beta2},
          {"eps", c.train.adam.eps},
          {"eval_every", c.train.eval_every},
          {"loss", to_string(c.train.loss)}}},
        {"model", {{"checkpoint", c.model.checkpoint}}},
        {"reconstruct",
         {{"input", c.reconstruct.input},
          {"window", {c.reconstruct.window_lo, c.reconstruct.window_hi}}}},
        {"bench",
         {{"sizes", c.bench.sizes}, {"schemes", schemes}, {"angles", c.bench.angles}, {"repeats", c.bench.repeats}}},
        {"robustness", {{"levels", c.robustness.levels}, {"runs", runs}}},
    };
}

}  // namespace

GridSpec GeometryConfig::grid() const { return GridSpec::centered(shape, spacing); }

Geometry GeometryConfig::geometry() const {
    const GridSpec g = grid();
    if (type == "fan") return make_fan_geometry(g, angles, source_axis_dist, axis_detector_dist);
    return make_cone_geometry(g, angles, source_axis_dist, axis_detector_dist);
}

GeometryConfig GeometryConfig::resized(std::int64_t n, std::int64_t n_angles) const {
    GeometryConfig c = *this;
    for (std::size_t a = 0; a < shape.size(); ++a) {
        c.spacing[a] = spacing[a] * static_cast<double>(shape[a]) / static_cast<double>(n);
        c.shape[a] = n;
    }
    c.angles = n_angles;
    return c;
}

std::filesystem::path RunConfig::dataset_dir() const {
    return dataset.path.empty() ? std::filesystem::path(output_dir) / "dataset" : std::filesystem::path(dataset.path);
}

std::filesystem::path RunConfig::checkpoint_path() const {
    return model.checkpoint.empty() ? std::filesystem::path(output_dir) / "checkpoint.mslr"
                                    : std::filesystem::path(model.checkpoint);
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
    }
    RunConfig c;
    Reader r(j, "");
    r.read("name", c.name);
    r.read("seed", c.seed);
    r.read("output_dir", c.output_dir);
    if (auto v = r.find("geometry")) c.geometry = geometry_from(*v, "geometry");
    try {
        validate(c.geometry.grid(), c.geometry.geometry());
    } catch (const std::exception& e) {
        fail("geometry", e.what());
    }
    if (auto v = r.find("phantom")) {
        Reader p(*v, "phantom");
        auto& s = c.phantom;
        p.read("min_count", s.min_count);
        p.read("max_count", s.max_count);
        p.read("max_center", s.max_center);
        p.read("min_axis", s.min_axis);
        p.read("max_axis", s.max_axis);
        p.read("min_density", s.min_density);
        p.read("max_density", s.max_density);
        p.read("v_max", s.v_max);
        p.read("supersample", s.supersample);
        p.finish();
        try {
            s.validate();
        } catch (const std::exception& e) {
            fail("phantom", e.what());
        }
    }
    if (auto v = r.find("noise")) {
        Reader n(*v, "noise");
        c.noise.kind = parse_enum(n, "kind", parse_noise_kind, c.noise.kind);
        n.read("level", c.noise.level);
        n.read("photons", c.noise.photons);
        n.read("mu", c.noise.mu);
        n.finish();
        if (!(c.noise.level >= 0)) fail("noise.level", "must be >= 0");
        if (!(c.noise.photons > 0)) fail("noise.photons", "must be positive");
        if (!(c.noise.mu > 0)) fail("noise.mu", "must be positive");
    }
    if (auto v = r.find("dataset")) {
        Reader d(*v, "dataset");
        d.read("path", c.dataset.path);
        d.read("train", c.dataset.train);
        d.read("val", c.dataset.val);
        d.read("test", c.dataset.test);
        d.finish();
        if (c.dataset.train < 0 || c.dataset.val < 0 || c.dataset.test < 0) fail("dataset", "counts must be >= 0");
    }
    if (auto v = r.find("scheme")) c.scheme = scheme_from(*v, "scheme");
    c.train.steps = TrainConfig::default_steps(static_cast<int>(c.geometry.shape.size()));
    if (auto v = r.find("train")) {
        Reader t(*v, "train");
        t.read("steps", c.train.steps);
        t.read("lr", c.train.lr);
        t.read("beta1", c.train.adam.beta1);
        t.read("beta2", c.train.adam.beta2);
        t.read("eps", c.train.adam.eps);
        t.read("eval_every", c.train.eval_every);
        c.train.loss = parse_enum(t, "loss", parse_loss, c.train.loss);
        t.finish();
        if (c.train.steps < 0) fail("train.steps", "must be >= 0");
        if (!(c.train.lr > 0)) fail("train.lr", "must be positive");
        if (c.train.eval_every < 1) fail("train.eval_every", "must be positive");
    }
    if (auto v = r.find("model")) {
        Reader m(*v, "model");
        m.read("checkpoint", c.model.checkpoint);
        m.finish();
    }
    if (auto v = r.find("reconstruct")) {
        Reader m(*v, "reconstruct");
        m.read("input", c.reconstruct.input);
        std::vector<double> w{c.reconstruct.window_lo, c.reconstruct.window_hi};
        m.read("window", w);
        m.finish();
        if (w.size() != 2 || !(w[1] > w[0])) fail("reconstruct.window", "must be [lo, hi] with hi > lo");
        c.reconstruct.window_lo = w[0];
        c.reconstruct.window_hi = w[1];
    }
    if (auto v = r.find("bench")) {
        Reader b(*v, "bench");
        b.read("sizes", c.bench.sizes);
        if (auto s = b.find("schemes")) {
            if (!s->is_array()) fail("bench.schemes", "must be an array");
            c.bench.schemes.clear();
            for (const auto& e : *s) {
                if (!e.is_string()) fail("bench.schemes", "must hold strings");
                try {
                    c.bench.schemes.push_back(parse_scheme_kind(e.get<std::string>()));
                } catch (const std::exception& ex) {
                    fail("bench.schemes", ex.what());
                }
            }
        }
        b.read("angles", c.bench.angles);
        b.read("repeats", c.bench.repeats);
        b.finish();
        for (auto n : c.bench.sizes)
            if (n < 1) fail("bench.sizes", "must be positive");
        if (c.bench.repeats < 1) fail("bench.repeats", "must be positive");
    }
    if (auto v = r.find("robustness")) {
        Reader rb(*v, "robustness");
        rb.read("levels", c.robustness.levels);
        if (auto runs = rb.find("runs")) {
            if (!runs->is_array()) fail("robustness.runs", "must be an array");
            for (std::size_t k = 0; k < runs->size(); ++k) {
                const std::string path = "robustness.runs[" + std::to_string(k) + "]";
                Reader rr((*runs)[k], path);
                RobustnessRun run;
                if (auto s = rr.find("scheme")) run.scheme = scheme_from(*s, path + ".scheme");
                rr.read("checkpoint", run.checkpoint);
                rr.finish();
                c.robustness.runs.push_back(std::move(run));
            }
        }
        rb.finish();
        for (double l : c.robustness.levels)
            if (!(l >= 0)) fail("robustness.levels", "must be >= 0");
    }
    r.finish();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& cfg) { return run_json(cfg).dump(2) + "\n"; }
std::string to_json(const SchemeConfig& cfg) { return scheme_json(cfg).dump(); }
std::string to_json(const GeometryConfig& cfg) { return geometry_json(cfg).dump(); }

GeometryConfig parse_geometry_config(const std::string& text) {
    try {
        return geometry_from(json::parse(text), "geometry");
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("geometry config: malformed JSON: ") + e.what());
    }
}

SchemeConfig parse_scheme_config(const std::string& text) {
    try {
        return scheme_from(json::parse(text), "scheme");
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("scheme config: malformed JSON: ") + e.what());
    }
}

std::array<std::uint8_t, 32> sha256(std::string_view bytes) {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        throw std::runtime_error("SHA-256 failed");
    return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (auto b : bytes) {
        s += digits[b >> 4];
        s += digits[b & 15];
    }
    return s;
}

std::string config_hash(const RunConfig& cfg) { return to_hex(sha256(to_json(cfg))); }

std::array<std::uint8_t, 32> scheme_fingerprint(const SchemeConfig& cfg) { return sha256(to_json(cfg)); }

}  // namespace mslir
