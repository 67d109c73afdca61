#include "mslir/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "mslir/config.hpp"

namespace mslir {

namespace {

class Writer {
public:
    std::vector<std::uint8_t> bytes;

    template <class U>
    void put(U v) {
        std::uint8_t b[sizeof(U)];
        std::memcpy(b, &v, sizeof(U));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
        bytes.insert(bytes.end(), b, b + sizeof(U));
    }
    void put_bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), c, c + n);
    }
    void put_floats(std::span<const float> v) {
        for (float x : v) put(x);
    }
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

    template <class U>
    U get() {
        need(sizeof(U));
        std::uint8_t tmp[sizeof(U)];
        std::memcpy(tmp, b_.data() + pos_, sizeof(U));
        if constexpr (std::endian::native == std::endian::big) std::reverse(tmp, tmp + sizeof(U));
        pos_ += sizeof(U);
        U v;
        std::memcpy(&v, tmp, sizeof(U));
        return v;
    }
    void get_bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, b_.data() + pos_, n);
        pos_ += n;
    }
    std::vector<float> get_floats(std::uint64_t n) {
        need(n * 4);
        std::vector<float> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = get<float>();
        return v;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > b_.size() - pos_) throw std::runtime_error("checkpoint: truncated file");
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const SchemeConfig& cfg, const ParamStore<float>& params, const Adam* opt,
                           std::int64_t step) {
    Checkpoint c;
    c.fingerprint = scheme_fingerprint(cfg);
    for (std::size_t p = 0; p < params.size(); ++p)
        c.params.push_back({params[p].name, params[p].shape,
                            std::vector<float>(params[p].value.begin(), params[p].value.end())});
    if (opt) {
        c.has_optimizer = true;
        c.adam = opt->config();
        c.adam_steps = opt->steps();
        c.first_moments = opt->first_moments();
        c.second_moments = opt->second_moments();
        // moments are created lazily on the first step
        if (c.first_moments.empty())
            for (const auto& b : c.params) {
                c.first_moments.emplace_back(b.values.size(), 0.0f);
                c.second_moments.emplace_back(b.values.size(), 0.0f);
            }
    }
    c.step = step;
    return c;
}

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
    Writer w;
    w.put_bytes("MSLR", 4);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put_bytes(c.fingerprint.data(), 32);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.params.size()));
    for (const auto& b : c.params) {
        if (numel(b.shape) != static_cast<std::int64_t>(b.values.size()))
            throw std::invalid_argument("checkpoint: blob '" + b.name + "' size does not match its shape");
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.name.size()));
        w.put_bytes(b.name.data(), b.name.size());
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.shape.size()));
        for (auto d : b.shape) w.put<std::int64_t>(d);
        w.put_floats(b.values);
    }
    w.put<std::uint8_t>(c.has_optimizer ? 1 : 0);
    if (c.has_optimizer) {
        if (c.first_moments.size() != c.params.size() || c.second_moments.size() != c.params.size())
            throw std::invalid_argument("checkpoint: optimiser state does not match the parameters");
        w.put<double>(c.adam.beta1);
        w.put<double>(c.adam.beta2);
        w.put<double>(c.adam.eps);
        w.put<std::int64_t>(c.adam_steps);
        for (std::size_t p = 0; p < c.params.size(); ++p) {
            if (c.first_moments[p].size() != c.params[p].values.size() ||
                c.second_moments[p].size() != c.params[p].values.size())
                throw std::invalid_argument("checkpoint: moment size mismatch for '" + c.params[p].name + "'");
            w.put_floats(c.first_moments[p]);
            w.put_floats(c.second_moments[p]);
        }
    }
    w.put<std::int64_t>(c.step);
    return std::move(w.bytes);
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::memcmp(magic, "MSLR", 4) != 0) throw std::runtime_error("checkpoint: bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    r.get_bytes(c.fingerprint.data(), 32);
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t p = 0; p < count; ++p) {
        Checkpoint::Blob b;
        b.name.resize(r.get<std::uint32_t>());
        r.get_bytes(b.name.data(), b.name.size());
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw std::runtime_error("checkpoint: implausible rank for '" + b.name + "'");
        for (std::uint32_t d = 0; d < rank; ++d) {
            b.shape.push_back(r.get<std::int64_t>());
            if (b.shape.back() < 0) throw std::runtime_error("checkpoint: negative dimension in '" + b.name + "'");
        }
        b.values = r.get_floats(static_cast<std::uint64_t>(numel(b.shape)));
        c.params.push_back(std::move(b));
    }
    const auto flag = r.get<std::uint8_t>();
    if (flag > 1) throw std::runtime_error("checkpoint: bad optimiser flag");
    c.has_optimizer = flag == 1;
    if (c.has_optimizer) {
        c.adam.beta1 = r.get<double>();
        c.adam.beta2 = r.get<double>();
        c.adam.eps = r.get<double>();
        c.adam_steps = r.get<std::int64_t>();
        for (const auto& b : c.params) {
            c.first_moments.push_back(r.get_floats(b.values.size()));
            c.second_moments.push_back(r.get_floats(b.values.size()));
        }
    }
    c.step = r.get<std::int64_t>();
    if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = serialize(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const SchemeConfig& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Checkpoint c = deserialize(bytes);
    if (c.fingerprint != scheme_fingerprint(expected))
        throw std::runtime_error("checkpoint: " + path.string() + " was written for a different scheme (fingerprint " +
                                 to_hex(c.fingerprint) + ", expected " + to_hex(scheme_fingerprint(expected)) + ")");
    return c;
}

void restore(const Checkpoint& ckpt, const Scheme& scheme, ParamStore<float>& params, Adam* opt) {
    if (params.size() == 0) scheme.build<float>(&params, LossMode::none);
    if (params.size() != ckpt.params.size())
        throw std::runtime_error("checkpoint: holds " + std::to_string(ckpt.params.size()) + " parameters, scheme has " +
                                 std::to_string(params.size()));
    for (std::size_t p = 0; p < params.size(); ++p) {
        const auto& b = ckpt.params[p];
        auto& prm = params[p];
        if (prm.name != b.name || prm.shape != b.shape)
            throw std::runtime_error("checkpoint: parameter " + std::to_string(p) + " is '" + b.name + "' " +
                                     to_string(b.shape) + ", scheme expects '" + prm.name + "' " + to_string(prm.shape));
        std::copy(b.values.begin(), b.values.end(), prm.value.begin());
    }
    if (opt) {
        if (!ckpt.has_optimizer) throw std::runtime_error("checkpoint: no optimiser state");
        *opt = Adam(ckpt.adam);
        opt->set_steps(ckpt.adam_steps);
        opt->first_moments() = ckpt.first_moments;
        opt->second_moments() = ckpt.second_moments;
    }
}

}  // namespace mslir
