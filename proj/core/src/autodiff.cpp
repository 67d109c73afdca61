#include "mslir/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.hpp"

namespace mslir {

// ---------------------------------------------------------------- ParamStore

template <class T>
Param<T>& ParamStore<T>::get_or_create(const std::string& name, const Shape& shape, Init init, std::int64_t fan_in) {
    if (auto it = index_.find(name); it != index_.end()) {
        Param<T>& p = *params_[it->second];
        if (p.shape != shape) {
            throw std::invalid_argument("parameter '" + name + "' requested with shape " + to_string(shape) +
                                        " but exists with shape " + to_string(p.shape));
        }
        return p;
    }
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->shape = shape;
    const std::size_t n = static_cast<std::size_t>(numel(shape));
    p->value.assign(n, T(0));
    p->grad.assign(n, T(0));
    if (init == Init::he_uniform) {
        const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::int64_t>(1, fan_in)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : p->value) v = static_cast<T>(dist(rng_));
    }
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
}

template <class T>
Param<T>& ParamStore<T>::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return *params_[it->second];
}

template <class T>
const Param<T>& ParamStore<T>::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return *params_[it->second];
}

template <class T>
std::int64_t ParamStore<T>::count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template <class T>
template <class U>
ParamStore<U> ParamStore<T>::cast() const {
    ParamStore<U> out(seed_);
    for (const auto& p : params_) {
        auto& q = out.get_or_create(p->name, p->shape, Init::zeros, 1);
        std::transform(p->value.begin(), p->value.end(), q.value.begin(), [](T v) { return static_cast<U>(v); });
    }
    return out;
}

// ---------------------------------------------------------------- Graph

namespace {

enum class Kind { input, param, conv, convt, maxpool, relu, concat, add, sub, scale, linear, sqdist, detach };

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::input: return "input";
        case Kind::param: return "param";
        case Kind::conv: return "conv";
        case Kind::convt: return "convt";
        case Kind::maxpool: return "maxpool";
        case Kind::relu: return "relu";
        case Kind::concat: return "concat";
        case Kind::add: return "add";
        case Kind::sub: return "sub";
        case Kind::scale: return "scale";
        case Kind::linear: return "linear";
        case Kind::sqdist: return "sqdist";
        case Kind::detach: return "detach";
    }
    return "?";
}

// Whether the backward rule of `k` reads the forward value of input `j`.
bool needs_input(Kind k, std::size_t j) {
    switch (k) {
        case Kind::conv:
        case Kind::convt: return j == 0;
        case Kind::scale:
        case Kind::sqdist: return true;
        default: return false;
    }
}

bool needs_own_value(Kind k) { return k == Kind::relu; }

kernels::Dims spatial_dims(const Shape& s) {
    kernels::Dims d;
    d.ndim = static_cast<int>(s.size()) - 2;
    if (d.ndim == 2) {
        d.h = s[2];
        d.w = s[3];
    } else if (d.ndim == 3) {
        d.d = s[2];
        d.h = s[3];
        d.w = s[4];
    } else {
        throw std::invalid_argument("expected a (batch, channels, 2D or 3D spatial) tensor, got " + to_string(s));
    }
    return d;
}

template <class V>
bool all_finite(const V& v) {
    for (auto x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

template <class T>
struct Graph<T>::Impl {
    struct Node {
        Kind kind;
        std::string name;
        Shape shape;
        std::vector<int> in;
        bool requires_grad = false;
        bool is_output = false;
        int k = 0;
        std::unique_ptr<LinearMap<T>> map;
        Param<T>* param = nullptr;
        Buffer<T> staged;  // input nodes

        // analysis
        int last_fwd_use = -1;
        int bwd_release = std::numeric_limits<int>::max();
        bool saved = false;

        // runtime
        Buffer<T> value;
        bool has_value = false;
        std::vector<std::int32_t> arg;
        Buffer<T> grad;
        bool has_grad = false;
    };

    ParamStore<T>* params;
    TraceLog* trace;
    std::vector<Node> nodes;
    std::map<std::string, int> param_nodes;
    std::string prefix;
    bool training = true;
    std::int64_t cur = 0, peak = 0, planned_peak = 0, saved_bytes = 0;

    Node& node(Var v) {
        if (v.id < 0 || v.id >= static_cast<int>(nodes.size())) throw std::invalid_argument("invalid graph variable");
        return nodes[static_cast<std::size_t>(v.id)];
    }

    Var add_node(Kind kind, Shape shape, std::vector<int> in, const std::string& label = {}) {
        Node n;
        n.kind = kind;
        n.name = prefix + (label.empty() ? kind_name(kind) : label);
        n.shape = std::move(shape);
        n.in = std::move(in);
        for (int j : n.in) n.requires_grad = n.requires_grad || nodes[static_cast<std::size_t>(j)].requires_grad;
        nodes.push_back(std::move(n));
        return Var{static_cast<int>(nodes.size()) - 1};
    }

    const T* data(int j) const {
        const Node& n = nodes[static_cast<std::size_t>(j)];
        if (n.kind == Kind::param) return n.param->value.data();
        if (!n.has_value) throw std::logic_error("value of node '" + n.name + "' is not available");
        return n.value.data();
    }

    static std::int64_t bytes(const Node& n) { return numel(n.shape) * static_cast<std::int64_t>(sizeof(T)); }

    void track(std::int64_t delta) {
        cur += delta;
        peak = std::max(peak, cur);
    }

    void alloc_value(Node& n) {
        n.value.assign(static_cast<std::size_t>(numel(n.shape)), T(0));
        n.has_value = true;
        track(bytes(n));
    }
    void release_value(Node& n) {
        if (!n.has_value || n.kind == Kind::param) return;
        Buffer<T>().swap(n.value);
        n.has_value = false;
        track(-bytes(n));
    }
    T* grad_of(int j) {
        Node& n = nodes[static_cast<std::size_t>(j)];
        if (n.kind == Kind::param) return n.param->grad.data();
        if (!n.has_grad) {
            n.grad.assign(static_cast<std::size_t>(numel(n.shape)), T(0));
            n.has_grad = true;
            track(bytes(n));
        }
        return n.grad.data();
    }
    void release_grad(Node& n) {
        if (!n.has_grad) return;
        Buffer<T>().swap(n.grad);
        n.has_grad = false;
        track(-bytes(n));
    }
    void release_arg(Node& n) {
        if (n.arg.empty()) return;
        track(-static_cast<std::int64_t>(n.arg.size() * sizeof(std::int32_t)));
        std::vector<std::int32_t>().swap(n.arg);
    }

    void reset() {
        for (auto& n : nodes) {
            release_value(n);
            release_grad(n);
            release_arg(n);
        }
        cur = 0;
        peak = 0;
    }

    void analyse(bool training) {
        const int count = static_cast<int>(nodes.size());
        for (auto& n : nodes) {
            n.last_fwd_use = -1;
            n.bwd_release = std::numeric_limits<int>::max();
            n.saved = false;
        }
        for (int i = 0; i < count; ++i) {
            Node& n = nodes[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < n.in.size(); ++j) {
                Node& src = nodes[static_cast<std::size_t>(n.in[j])];
                src.last_fwd_use = std::max(src.last_fwd_use, i);
                if (training && n.requires_grad && needs_input(n.kind, j)) {
                    src.saved = true;
                    src.bwd_release = std::min(src.bwd_release, i);
                }
            }
            if (training && n.requires_grad && needs_own_value(n.kind)) {
                n.saved = true;
                n.bwd_release = std::min(n.bwd_release, i);
            }
        }
    }

    std::int64_t arg_bytes(const Node& n) const {
        return n.kind == Kind::maxpool && n.requires_grad ? numel(n.shape) * static_cast<std::int64_t>(sizeof(std::int32_t)) : 0;
    }

    // Replays the allocation schedule of forward (and backward from `loss`
    // when non-negative) on sizes only.
    std::int64_t plan(bool training, int loss) const {
        const int count = static_cast<int>(nodes.size());
        std::int64_t c = 0, p = 0;
        auto add = [&](std::int64_t d) {
            c += d;
            p = std::max(p, c);
        };
        std::vector<char> live(nodes.size(), 0);
        auto keep = [&](const Node& n) { return n.is_output || (training && n.saved); };
        for (int i = 0; i < count; ++i) {
            const Node& n = nodes[static_cast<std::size_t>(i)];
            if (n.kind == Kind::param) continue;
            add(bytes(n));
            live[static_cast<std::size_t>(i)] = 1;
            if (training) add(arg_bytes(n));
            for (int j : n.in) {
                const Node& src = nodes[static_cast<std::size_t>(j)];
                if (src.kind != Kind::param && src.last_fwd_use == i && !keep(src) && live[static_cast<std::size_t>(j)]) {
                    add(-bytes(src));
                    live[static_cast<std::size_t>(j)] = 0;
                }
            }
            if (n.last_fwd_use < 0 && !keep(n)) {
                add(-bytes(n));
                live[static_cast<std::size_t>(i)] = 0;
            }
        }
        if (loss < 0) return p;
        std::vector<char> has_grad(nodes.size(), 0);
        has_grad[static_cast<std::size_t>(loss)] = 1;
        add(bytes(nodes[static_cast<std::size_t>(loss)]));
        for (int i = count - 1; i >= 0; --i) {
            const Node& n = nodes[static_cast<std::size_t>(i)];
            if (has_grad[static_cast<std::size_t>(i)] && n.requires_grad) {
                for (int j : n.in) {
                    const Node& src = nodes[static_cast<std::size_t>(j)];
                    if (!src.requires_grad || src.kind == Kind::param || has_grad[static_cast<std::size_t>(j)]) continue;
                    has_grad[static_cast<std::size_t>(j)] = 1;
                    add(bytes(src));
                }
            }
            if (has_grad[static_cast<std::size_t>(i)]) {
                add(-bytes(n));
                has_grad[static_cast<std::size_t>(i)] = 0;
            }
            add(-arg_bytes(n));
            for (int j = 0; j < count; ++j) {
                const Node& src = nodes[static_cast<std::size_t>(j)];
                if (src.saved && src.bwd_release == i && !src.is_output && live[static_cast<std::size_t>(j)]) {
                    add(-bytes(src));
                    live[static_cast<std::size_t>(j)] = 0;
                }
            }
        }
        return p;
    }

    void compute(int i);
    void backprop(int i);
};

template <class T>
void Graph<T>::Impl::compute(int i) {
    Node& n = nodes[static_cast<std::size_t>(i)];
    const std::int64_t batch = n.shape.empty() ? 1 : n.shape[0];
    switch (n.kind) {
        case Kind::param: return;
        case Kind::input: {
            if (n.staged.empty()) throw std::logic_error("input '" + n.name + "' was not set");
            alloc_value(n);
            std::copy(n.staged.begin(), n.staged.end(), n.value.begin());
            return;
        }
        default: break;
    }
    alloc_value(n);
    T* out = n.value.data();
    auto in_node = [&](std::size_t j) -> Node& { return nodes[static_cast<std::size_t>(n.in[j])]; };
    switch (n.kind) {
        case Kind::conv: {
            const Node& x = in_node(0);
            const auto s = spatial_dims(x.shape);
            const std::int64_t cin = x.shape[1], cout = n.shape[1], per_in = cin * s.size(), per_out = cout * s.size();
            for (std::int64_t b = 0; b < batch; ++b)
                kernels::conv_forward<T>(s, cin, cout, n.k, data(n.in[0]) + b * per_in, data(n.in[1]), data(n.in[2]),
                                         out + b * per_out);
            break;
        }
        case Kind::convt: {
            const Node& x = in_node(0);
            const auto s = spatial_dims(x.shape);
            const std::int64_t cin = x.shape[1], cout = n.shape[1], per_in = cin * s.size();
            const std::int64_t per_out = numel(n.shape) / batch;
            for (std::int64_t b = 0; b < batch; ++b)
                kernels::conv_transpose2_forward<T>(s, cin, cout, data(n.in[0]) + b * per_in, data(n.in[1]),
                                                    data(n.in[2]), out + b * per_out);
            break;
        }
        case Kind::maxpool: {
            const Node& x = in_node(0);
            const auto s = spatial_dims(x.shape);
            const std::int64_t c = x.shape[1], per_in = c * s.size(), per_out = numel(n.shape) / batch;
            std::vector<std::int32_t> arg(static_cast<std::size_t>(numel(n.shape)));
            for (std::int64_t b = 0; b < batch; ++b)
                kernels::maxpool2_forward<T>(s, c, data(n.in[0]) + b * per_in, out + b * per_out, arg.data() + b * per_out);
            if (n.requires_grad && training) {
                n.arg = std::move(arg);
                track(static_cast<std::int64_t>(n.arg.size() * sizeof(std::int32_t)));
            }
            break;
        }
        case Kind::relu: {
            const T* x = data(n.in[0]);
            for (std::size_t q = 0; q < n.value.size(); ++q) out[q] = x[q] > T(0) ? x[q] : T(0);
            break;
        }
        case Kind::concat: {
            const std::int64_t per_out = numel(n.shape) / batch;
            std::int64_t offset = 0;
            for (std::size_t j = 0; j < n.in.size(); ++j) {
                const std::int64_t per_in = numel(in_node(j).shape) / batch;
                const T* x = data(n.in[j]);
                for (std::int64_t b = 0; b < batch; ++b)
                    std::copy(x + b * per_in, x + (b + 1) * per_in, out + b * per_out + offset);
                offset += per_in;
            }
            break;
        }
        case Kind::add:
        case Kind::sub: {
            const T* a = data(n.in[0]);
            const T* c = data(n.in[1]);
            if (n.kind == Kind::add)
                for (std::size_t q = 0; q < n.value.size(); ++q) out[q] = a[q] + c[q];
            else
                for (std::size_t q = 0; q < n.value.size(); ++q) out[q] = a[q] - c[q];
            break;
        }
        case Kind::scale: {
            const T* x = data(n.in[0]);
            const T s = data(n.in[1])[0];
            for (std::size_t q = 0; q < n.value.size(); ++q) out[q] = x[q] * s;
            break;
        }
        case Kind::linear: {
            const Node& x = in_node(0);
            const std::int64_t slices = x.shape[0] * x.shape[1];
            const std::int64_t in_len = numel(x.shape) / slices, out_len = numel(n.shape) / slices;
            const T* xv = data(n.in[0]);
            for (std::int64_t q = 0; q < slices; ++q) {
                n.map->apply(std::span<const T>(xv + q * in_len, static_cast<std::size_t>(in_len)),
                             std::span<T>(out + q * out_len, static_cast<std::size_t>(out_len)));
                if (trace) trace->record({n.map->scale, n.map->name, n.map->in_shape, n.map->out_shape, false});
            }
            break;
        }
        case Kind::sqdist: {
            const T* a = data(n.in[0]);
            const T* c = data(n.in[1]);
            const std::int64_t len = numel(in_node(0).shape);
            double s = 0.0;
            for (std::int64_t q = 0; q < len; ++q) {
                const double d = static_cast<double>(a[q]) - static_cast<double>(c[q]);
                s += d * d;
            }
            out[0] = static_cast<T>(s);
            break;
        }
        case Kind::detach: {
            const T* x = data(n.in[0]);
            std::copy(x, x + n.value.size(), out);
            break;
        }
        default: break;
    }
    if (!all_finite(n.value)) throw NonFiniteError(n.name, false);
}

template <class T>
void Graph<T>::Impl::backprop(int i) {
    Node& n = nodes[static_cast<std::size_t>(i)];
    if (!n.has_grad || !n.requires_grad) return;
    if (!all_finite(n.grad)) throw NonFiniteError(n.name, true);
    const T* dy = n.grad.data();
    const std::int64_t batch = n.shape.empty() ? 1 : n.shape[0];
    auto in_node = [&](std::size_t j) -> Node& { return nodes[static_cast<std::size_t>(n.in[j])]; };
    auto wants = [&](std::size_t j) { return in_node(j).requires_grad; };
    switch (n.kind) {
        case Kind::conv:
        case Kind::convt: {
            const Node& x = in_node(0);
            const auto s = spatial_dims(x.shape);
            const std::int64_t cin = x.shape[1], cout = n.shape[1];
            const std::int64_t per_in = numel(x.shape) / batch, per_out = numel(n.shape) / batch;
            T* dx = wants(0) ? grad_of(n.in[0]) : nullptr;
            // Weight and bias gradients are needed by the kernels even when frozen.
            Buffer<T> dw_scratch, db_scratch;
            T* dw;
            T* db;
            if (wants(1)) {
                dw = grad_of(n.in[1]);
            } else {
                dw_scratch.assign(static_cast<std::size_t>(numel(in_node(1).shape)), T(0));
                dw = dw_scratch.data();
            }
            if (wants(2)) {
                db = grad_of(n.in[2]);
            } else {
                db_scratch.assign(static_cast<std::size_t>(numel(in_node(2).shape)), T(0));
                db = db_scratch.data();
            }
            for (std::int64_t b = 0; b < batch; ++b) {
                if (n.kind == Kind::conv)
                    kernels::conv_backward<T>(s, cin, cout, n.k, data(n.in[0]) + b * per_in, data(n.in[1]),
                                              dy + b * per_out, dx ? dx + b * per_in : nullptr, dw, db);
                else
                    kernels::conv_transpose2_backward<T>(s, cin, cout, data(n.in[0]) + b * per_in, data(n.in[1]),
                                                         dy + b * per_out, dx ? dx + b * per_in : nullptr, dw, db);
            }
            break;
        }
        case Kind::maxpool: {
            if (!wants(0)) break;
            const Node& x = in_node(0);
            const auto s = spatial_dims(x.shape);
            const std::int64_t c = x.shape[1], per_in = numel(x.shape) / batch, per_out = numel(n.shape) / batch;
            T* dx = grad_of(n.in[0]);
            for (std::int64_t b = 0; b < batch; ++b)
                kernels::maxpool2_backward<T>(s, c, n.arg.data() + b * per_out, dy + b * per_out, dx + b * per_in);
            break;
        }
        case Kind::relu: {
            if (!wants(0)) break;
            T* dx = grad_of(n.in[0]);
            const T* y = data(i);
            for (std::size_t q = 0; q < n.grad.size(); ++q)
                if (y[q] > T(0)) dx[q] += dy[q];
            break;
        }
        case Kind::concat: {
            const std::int64_t per_out = numel(n.shape) / batch;
            std::int64_t offset = 0;
            for (std::size_t j = 0; j < n.in.size(); ++j) {
                const std::int64_t per_in = numel(in_node(j).shape) / batch;
                if (wants(j)) {
                    T* dx = grad_of(n.in[j]);
                    for (std::int64_t b = 0; b < batch; ++b)
                        for (std::int64_t q = 0; q < per_in; ++q) dx[b * per_in + q] += dy[b * per_out + offset + q];
                }
                offset += per_in;
            }
            break;
        }
        case Kind::add:
        case Kind::sub: {
            const std::size_t len = n.grad.size();
            if (wants(0)) {
                T* da = grad_of(n.in[0]);
                for (std::size_t q = 0; q < len; ++q) da[q] += dy[q];
            }
            if (wants(1)) {
                T* db = grad_of(n.in[1]);
                if (n.kind == Kind::add)
                    for (std::size_t q = 0; q < len; ++q) db[q] += dy[q];
                else
                    for (std::size_t q = 0; q < len; ++q) db[q] -= dy[q];
            }
            break;
        }
        case Kind::scale: {
            const T* x = data(n.in[0]);
            const T s = data(n.in[1])[0];
            if (wants(0)) {
                T* dx = grad_of(n.in[0]);
                for (std::size_t q = 0; q < n.grad.size(); ++q) dx[q] += s * dy[q];
            }
            if (wants(1)) {
                double acc = 0.0;
                for (std::size_t q = 0; q < n.grad.size(); ++q) acc += static_cast<double>(x[q]) * static_cast<double>(dy[q]);
                grad_of(n.in[1])[0] += static_cast<T>(acc);
            }
            break;
        }
        case Kind::linear: {
            if (!wants(0)) break;
            const Node& x = in_node(0);
            const std::int64_t slices = x.shape[0] * x.shape[1];
            const std::int64_t in_len = numel(x.shape) / slices, out_len = numel(n.shape) / slices;
            T* dx = grad_of(n.in[0]);
            Buffer<T> tmp(static_cast<std::size_t>(in_len));
            for (std::int64_t q = 0; q < slices; ++q) {
                n.map->transpose(std::span<const T>(dy + q * out_len, static_cast<std::size_t>(out_len)), tmp);
                if (trace) trace->record({n.map->scale, n.map->name, n.map->out_shape, n.map->in_shape, true});
                T* d = dx + q * in_len;
                for (std::int64_t k = 0; k < in_len; ++k) d[k] += tmp[static_cast<std::size_t>(k)];
            }
            break;
        }
        case Kind::sqdist: {
            const T* a = data(n.in[0]);
            const T* c = data(n.in[1]);
            const std::int64_t len = numel(in_node(0).shape);
            const T g0 = dy[0];
            if (wants(0)) {
                T* da = grad_of(n.in[0]);
                for (std::int64_t q = 0; q < len; ++q) da[q] += T(2) * (a[q] - c[q]) * g0;
            }
            if (wants(1)) {
                T* dc = grad_of(n.in[1]);
                for (std::int64_t q = 0; q < len; ++q) dc[q] -= T(2) * (a[q] - c[q]) * g0;
            }
            break;
        }
        default: break;
    }
}

template <class T>
Graph<T>::Graph(ParamStore<T>* params, TraceLog* trace) : impl_(std::make_unique<Impl>()) {
    impl_->params = params;
    impl_->trace = trace;
}

template <class T>
Graph<T>::~Graph() = default;

template <class T>
Graph<T>::Scope::Scope(Graph& g, const std::string& name) : g_(g), len_(g.impl_->prefix.size()) {
    g_.impl_->prefix += name + "/";
}

template <class T>
Graph<T>::Scope::~Scope() {
    g_.impl_->prefix.resize(len_);
}

template <class T>
Var Graph<T>::input(const Shape& shape, const std::string& name) {
    if (shape.empty() || numel(shape) <= 0) throw std::invalid_argument("input '" + name + "' needs a non-empty shape");
    return impl_->add_node(Kind::input, shape, {}, name);
}

template <class T>
void Graph<T>::set_input(Var v, std::span<const T> values) {
    auto& n = impl_->node(v);
    if (n.kind != Kind::input) throw std::invalid_argument("node '" + n.name + "' is not an input");
    if (static_cast<std::int64_t>(values.size()) != numel(n.shape)) {
        throw std::invalid_argument("input '" + n.name + "' expects " + std::to_string(numel(n.shape)) +
                                    " values, got " + std::to_string(values.size()));
    }
    n.staged.assign(values.begin(), values.end());
}

template <class T>
Var Graph<T>::param(const std::string& name) {
    if (!impl_->params) throw std::logic_error("graph has no parameter store");
    if (auto it = impl_->param_nodes.find(name); it != impl_->param_nodes.end()) return Var{it->second};
    Param<T>& p = impl_->params->at(name);
    const std::string saved = impl_->prefix;
    impl_->prefix.clear();
    Var v = impl_->add_node(Kind::param, p.shape, {}, name);
    impl_->prefix = saved;
    auto& n = impl_->node(v);
    n.param = &p;
    n.requires_grad = true;
    impl_->param_nodes[name] = v.id;
    return v;
}

template <class T>
Var Graph<T>::param(const std::string& name, const Shape& shape, Init init, std::int64_t fan_in) {
    if (!impl_->params) throw std::logic_error("graph has no parameter store");
    impl_->params->get_or_create(name, shape, init, fan_in);
    return param(name);
}

template <class T>
Var Graph<T>::conv(Var x, Var weight, Var bias) {
    const Shape& xs = impl_->node(x).shape;
    const Shape& ws = impl_->node(weight).shape;
    const Shape& bs = impl_->node(bias).shape;
    const int nd = static_cast<int>(xs.size()) - 2;
    spatial_dims(xs);
    if (static_cast<int>(ws.size()) != nd + 2 || ws[1] != xs[1])
        throw std::invalid_argument("conv: weight " + to_string(ws) + " does not match input " + to_string(xs));
    const std::int64_t k = ws[2];
    if (k != 1 && k != 3) throw std::invalid_argument("conv: kernel size must be 1 or 3");
    for (int a = 2; a < nd + 2; ++a)
        if (ws[a] != k) throw std::invalid_argument("conv: kernel must be cubic, got " + to_string(ws));
    if (bs != Shape{ws[0]}) throw std::invalid_argument("conv: bias " + to_string(bs) + " does not match weight");
    Shape out = xs;
    out[1] = ws[0];
    Var v = impl_->add_node(Kind::conv, out, {x.id, weight.id, bias.id});
    impl_->node(v).k = static_cast<int>(k);
    return v;
}

template <class T>
Var Graph<T>::conv_transpose2(Var x, Var weight, Var bias) {
    const Shape& xs = impl_->node(x).shape;
    const Shape& ws = impl_->node(weight).shape;
    const Shape& bs = impl_->node(bias).shape;
    const int nd = static_cast<int>(xs.size()) - 2;
    spatial_dims(xs);
    if (static_cast<int>(ws.size()) != nd + 2 || ws[0] != xs[1])
        throw std::invalid_argument("convt: weight " + to_string(ws) + " does not match input " + to_string(xs));
    for (int a = 2; a < nd + 2; ++a)
        if (ws[a] != 2) throw std::invalid_argument("convt: kernel must be 2, got " + to_string(ws));
    if (bs != Shape{ws[1]}) throw std::invalid_argument("convt: bias " + to_string(bs) + " does not match weight");
    Shape out = xs;
    out[1] = ws[1];
    for (int a = 2; a < nd + 2; ++a) out[a] *= 2;
    return impl_->add_node(Kind::convt, out, {x.id, weight.id, bias.id});
}

template <class T>
Var Graph<T>::maxpool2(Var x) {
    const Shape& xs = impl_->node(x).shape;
    spatial_dims(xs);
    Shape out = xs;
    for (std::size_t a = 2; a < xs.size(); ++a) {
        if (xs[a] % 2 != 0)
            throw std::invalid_argument("maxpool2: spatial size " + to_string(xs) + " is not even along axis " +
                                        std::to_string(a));
        out[a] /= 2;
    }
    return impl_->add_node(Kind::maxpool, out, {x.id});
}

template <class T>
Var Graph<T>::relu(Var x) {
    return impl_->add_node(Kind::relu, impl_->node(x).shape, {x.id});
}

template <class T>
Var Graph<T>::concat(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat of nothing");
    Shape out = impl_->node(xs[0]).shape;
    if (out.size() < 2) throw std::invalid_argument("concat needs (batch, channels, ...) tensors");
    std::vector<int> ids;
    out[1] = 0;
    for (Var v : xs) {
        const Shape& s = impl_->node(v).shape;
        Shape a = s, b = out;
        a[1] = b[1] = 0;
        if (a != b) throw std::invalid_argument("concat: shape " + to_string(s) + " does not match " + to_string(out));
        out[1] += s[1];
        ids.push_back(v.id);
    }
    return impl_->add_node(Kind::concat, out, ids);
}

template <class T>
Var Graph<T>::add(Var a, Var b) {
    if (impl_->node(a).shape != impl_->node(b).shape)
        throw std::invalid_argument("add: shapes " + to_string(impl_->node(a).shape) + " and " +
                                    to_string(impl_->node(b).shape) + " differ");
    return impl_->add_node(Kind::add, impl_->node(a).shape, {a.id, b.id});
}

template <class T>
Var Graph<T>::sub(Var a, Var b) {
    if (impl_->node(a).shape != impl_->node(b).shape)
        throw std::invalid_argument("sub: shapes " + to_string(impl_->node(a).shape) + " and " +
                                    to_string(impl_->node(b).shape) + " differ");
    return impl_->add_node(Kind::sub, impl_->node(a).shape, {a.id, b.id});
}

template <class T>
Var Graph<T>::scale(Var x, Var s) {
    if (numel(impl_->node(s).shape) != 1) throw std::invalid_argument("scale: factor must have one element");
    return impl_->add_node(Kind::scale, impl_->node(x).shape, {x.id, s.id});
}

template <class T>
Var Graph<T>::linear(Var x, LinearMap<T> map) {
    if (!map.apply) throw std::invalid_argument("linear map '" + map.name + "' has no forward");
    if (!map.transpose) throw std::invalid_argument("linear map '" + map.name + "' has no registered transpose");
    const Shape& xs = impl_->node(x).shape;
    if (xs.size() != map.in_shape.size() + 2 || !std::equal(map.in_shape.begin(), map.in_shape.end(), xs.begin() + 2))
        throw std::invalid_argument("linear map '" + map.name + "' expects " + to_string(map.in_shape) +
                                    " slices, got " + to_string(xs));
    Shape out{xs[0], xs[1]};
    out.insert(out.end(), map.out_shape.begin(), map.out_shape.end());
    const std::string label = map.name + "@" + std::to_string(map.scale);
    Var v = impl_->add_node(Kind::linear, out, {x.id}, label);
    impl_->node(v).map = std::make_unique<LinearMap<T>>(std::move(map));
    return v;
}

template <class T>
Var Graph<T>::squared_distance(Var a, Var b) {
    if (impl_->node(a).shape != impl_->node(b).shape)
        throw std::invalid_argument("squared_distance: shapes " + to_string(impl_->node(a).shape) + " and " +
                                    to_string(impl_->node(b).shape) + " differ");
    return impl_->add_node(Kind::sqdist, Shape{1}, {a.id, b.id});
}

template <class T>
Var Graph<T>::detach(Var x) {
    Var v = impl_->add_node(Kind::detach, impl_->node(x).shape, {x.id});
    impl_->node(v).requires_grad = false;
    return v;
}

template <class T>
void Graph<T>::mark_output(Var v) {
    impl_->node(v).is_output = true;
}

template <class T>
void Graph<T>::forward() {
    Impl& m = *impl_;
    m.reset();
    m.training = training_;
    m.analyse(training_);
    m.planned_peak = m.plan(training_, -1);
    const int count = static_cast<int>(m.nodes.size());
    auto keep = [&](const typename Impl::Node& n) { return n.is_output || (training_ && n.saved); };
    for (int i = 0; i < count; ++i) {
        auto& n = m.nodes[static_cast<std::size_t>(i)];
        m.compute(i);
        if (!training_ || !n.requires_grad) m.release_arg(n);
        for (int j : n.in) {
            auto& src = m.nodes[static_cast<std::size_t>(j)];
            if (src.last_fwd_use == i && !keep(src)) m.release_value(src);
        }
        if (n.last_fwd_use < 0 && !keep(n)) m.release_value(n);
    }
    m.saved_bytes = m.cur;
}

template <class T>
void Graph<T>::backward(Var loss) {
    Impl& m = *impl_;
    auto& ln = m.node(loss);
    if (numel(ln.shape) != 1) throw std::invalid_argument("backward needs a scalar loss");
    if (!training_) throw std::logic_error("backward on a graph evaluated with training disabled");
    m.planned_peak = std::max(m.planned_peak, m.plan(true, loss.id));
    m.grad_of(loss.id)[0] = T(1);
    const int count = static_cast<int>(m.nodes.size());
    // Saved values grouped by the backward step that releases them.
    std::vector<std::vector<int>> release_at(m.nodes.size());
    for (int j = 0; j < count; ++j) {
        const auto& n = m.nodes[static_cast<std::size_t>(j)];
        if (n.saved && !n.is_output && n.bwd_release < count) release_at[static_cast<std::size_t>(n.bwd_release)].push_back(j);
    }
    for (int i = count - 1; i >= 0; --i) {
        auto& n = m.nodes[static_cast<std::size_t>(i)];
        m.backprop(i);
        m.release_grad(n);
        m.release_arg(n);
        for (int j : release_at[static_cast<std::size_t>(i)]) m.release_value(m.nodes[static_cast<std::size_t>(j)]);
    }
    if (m.params) {
        for (std::size_t p = 0; p < m.params->size(); ++p) {
            const auto& prm = (*m.params)[p];
            if (!all_finite(prm.grad)) throw NonFiniteError(prm.name, true);
        }
    }
}

template <class T>
std::span<const T> Graph<T>::value(Var v) const {
    const auto& n = impl_->nodes.at(static_cast<std::size_t>(v.id));
    return std::span<const T>(impl_->data(v.id), static_cast<std::size_t>(numel(n.shape)));
}

template <class T>
T Graph<T>::scalar(Var v) const {
    auto s = value(v);
    if (s.size() != 1) throw std::invalid_argument("node is not a scalar");
    return s[0];
}

template <class T>
const Shape& Graph<T>::shape(Var v) const {
    return impl_->nodes.at(static_cast<std::size_t>(v.id)).shape;
}

template <class T>
const std::string& Graph<T>::name(Var v) const {
    return impl_->nodes.at(static_cast<std::size_t>(v.id)).name;
}

template <class T>
std::size_t Graph<T>::node_count() const {
    return impl_->nodes.size();
}

template <class T>
MemoryStats Graph<T>::memory() const {
    return {impl_->planned_peak, impl_->peak, impl_->saved_bytes};
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<double> ParamStore<float>::cast<double>() const;
template ParamStore<float> ParamStore<double>::cast<float>() const;
template ParamStore<float> ParamStore<float>::cast<float>() const;
template ParamStore<double> ParamStore<double>::cast<double>() const;
template class Graph<float>;
template class Graph<double>;

}  // namespace mslir
