#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mslir/filters.hpp"
#include "mslir/grid.hpp"
#include "mslir/ray_transform.hpp"
#include "mslir/sequence.hpp"

namespace mslir {

/// One operator application as seen by the trace log.
struct TraceEntry {
    int scale = -1;
    std::string op;
    Shape in_shape;
    Shape out_shape;
    bool transposed = false;  // applied as a vector-Jacobian product during backward
};

/// Records operator applications in call order. Not thread-safe; one log per graph.
class TraceLog {
public:
    void record(TraceEntry entry) { entries_.push_back(std::move(entry)); }
    const std::vector<TraceEntry>& entries() const { return entries_; }
    void clear() { entries_.clear(); }

    /// Applications of `op` at `scale` (any scale when negative), forward passes only.
    std::int64_t count(const std::string& op, int scale = -1) const;

    /// One line per entry: "<scale> <op>[^T] <in shape> -> <out shape>".
    void write(std::ostream& os) const;

private:
    std::vector<TraceEntry> entries_;
};

/// A linear map between flat arrays with a registered transpose.
template <class T>
struct LinearMap {
    using Apply = std::function<void(std::span<const T>, std::span<T>)>;

    std::string name;
    int scale = -1;
    Shape in_shape;
    Shape out_shape;
    Apply apply;
    Apply transpose;
};

/// A_i, A*_i, A-dagger_i, pi_i and tau_i for every scale of a sequence, built once
/// and shared by all graphs of a scheme.
class OperatorSet {
public:
    OperatorSet(DiscretisationSequence seq, FilterSpec pinv_spec);

    const DiscretisationSequence& sequence() const { return *seq_; }
    const FilterSpec& pinv_spec() const { return spec_; }
    const RayTransform& ray(int i) const { return *ray_.at(static_cast<std::size_t>(i)); }
    const FilteredBackprojection& pinv(int i) const { return *pinv_.at(static_cast<std::size_t>(i)); }

    /// 1 / mean(diag(A_i* A_i)) = n_cells / ||A_i||_F^2. Scalar Jacobi
    /// scaling of A*(A f - g): a one-cell error comes back at unit size.
    double gradient_scale(int i) const { return grad_scale_.at(static_cast<std::size_t>(i)); }

    template <class T>
    LinearMap<T> forward(int i) const;
    template <class T>
    LinearMap<T> adjoint(int i) const;
    /// gradient_scale(i) * A*_i, traced as "A*".
    template <class T>
    LinearMap<T> scaled_adjoint(int i) const;
    template <class T>
    LinearMap<T> pseudo_inverse(int i) const;
    template <class T>
    LinearMap<T> project(int i) const;  // pi_i: finest data -> Y_i
    template <class T>
    LinearMap<T> upsample(int i) const;  // tau_i: X_{i-1} -> X_i

private:
    std::shared_ptr<const DiscretisationSequence> seq_;
    FilterSpec spec_;
    std::vector<std::shared_ptr<const RayTransform>> ray_;
    std::vector<std::shared_ptr<const FilteredBackprojection>> pinv_;
    std::vector<double> grad_scale_;
};

}  // namespace mslir
