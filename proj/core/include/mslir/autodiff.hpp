#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mslir/aligned.hpp"
#include "mslir/grid.hpp"
#include "mslir/linear_op.hpp"

namespace mslir {

enum class Init { he_uniform, zeros };

template <class T>
struct Param {
    std::string name;
    Shape shape;
    Buffer<T> value;
    Buffer<T> grad;
    std::int64_t size() const { return numel(shape); }
};

/// Named parameters in creation order. He-uniform initialisation draws from
/// one seeded generator, so the values depend only on the seed and on the
/// order in which parameters are first requested.
template <class T>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    /// Returns the parameter, creating it on first use. A later request with a
    /// different shape is an error.
    Param<T>& get_or_create(const std::string& name, const Shape& shape, Init init, std::int64_t fan_in);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Param<T>& at(const std::string& name);
    const Param<T>& at(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    Param<T>& operator[](std::size_t i) { return *params_[i]; }
    const Param<T>& operator[](std::size_t i) const { return *params_[i]; }

    /// Total number of scalar parameters.
    std::int64_t count() const;
    void zero_grad();
    std::uint64_t seed() const { return seed_; }

    /// Copy with values converted to another precision (gradients zeroed).
    template <class U>
    ParamStore<U> cast() const;

private:
    std::uint64_t seed_;
    std::mt19937_64 rng_;
    std::vector<std::unique_ptr<Param<T>>> params_;
    std::map<std::string, std::size_t> index_;
};

/// Thrown when a forward value or gradient stops being finite.
class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(const std::string& node, bool in_backward)
        : std::runtime_error(std::string(in_backward ? "non-finite gradient at node '" : "non-finite value at node '") +
                             node + "'"),
          node_(node) {}
    const std::string& node() const { return node_; }

private:
    std::string node_;
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

struct MemoryStats {
    std::int64_t planned_peak_bytes = 0;   // from the static live-range analysis
    std::int64_t measured_peak_bytes = 0;  // high-water mark of tracked activation buffers
    std::int64_t saved_bytes = 0;          // held for backward at the end of forward
};

/// Statically built reverse-mode graph.
///
/// Tensors are row-major with shape (batch, channels, spatial...). Nodes are
/// appended in topological order; `forward` evaluates all of them and
/// releases every value that no later forward step or backward rule needs.
/// `backward` walks the nodes in reverse and accumulates parameter gradients
/// into the ParamStore. Memory figures count activation, gradient and saved
/// buffers; parameters and kernel scratch space are excluded.
template <class T>
class Graph {
public:
    explicit Graph(ParamStore<T>* params = nullptr, TraceLog* trace = nullptr);
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Name prefix for nodes created while the scope is alive (diagnostics only).
    class Scope {
    public:
        Scope(Graph& g, const std::string& name);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Graph& g_;
        std::size_t len_;
    };

    Var input(const Shape& shape, const std::string& name);
    void set_input(Var v, std::span<const T> values);
    Var param(const std::string& name);
    Var param(const std::string& name, const Shape& shape, Init init, std::int64_t fan_in);

    /// "same" convolution, kernel 1 or 3; weight (Cout, Cin, k...), bias (Cout).
    Var conv(Var x, Var weight, Var bias);
    /// Transposed convolution, kernel 2, stride 2; weight (Cin, Cout, 2...), bias (Cout).
    Var conv_transpose2(Var x, Var weight, Var bias);
    Var maxpool2(Var x);
    Var relu(Var x);
    Var concat(const std::vector<Var>& xs);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    /// x * s for a one-element s.
    Var scale(Var x, Var s);
    /// Applies `map` to every (batch, channel) slice; the transpose is the VJP.
    Var linear(Var x, LinearMap<T> map);
    /// ||a - b||^2 as a one-element tensor.
    Var squared_distance(Var a, Var b);
    /// Identity forward, blocks gradient flow.
    Var detach(Var x);

    /// Keeps the value of `v` available after forward.
    void mark_output(Var v);
    /// When false, forward saves nothing for backward.
    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }

    void forward();
    void backward(Var loss);

    std::span<const T> value(Var v) const;
    T scalar(Var v) const;
    const Shape& shape(Var v) const;
    const std::string& name(Var v) const;
    std::size_t node_count() const;

    MemoryStats memory() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    bool training_ = true;
};

}  // namespace mslir
