#include "mslir/linear_op.hpp"

#include <algorithm>
#include <ostream>

#include "mslir/resample.hpp"

namespace mslir {

std::int64_t TraceLog::count(const std::string& op, int scale) const {
    return std::count_if(entries_.begin(), entries_.end(), [&](const TraceEntry& e) {
        return !e.transposed && e.op == op && (scale < 0 || e.scale == scale);
    });
}

void TraceLog::write(std::ostream& os) const {
    for (const auto& e : entries_) {
        os << e.scale << ' ' << e.op << (e.transposed ? "^T" : "") << ' ' << to_string(e.in_shape) << " -> "
           << to_string(e.out_shape) << '\n';
    }
}

OperatorSet::OperatorSet(DiscretisationSequence seq, FilterSpec pinv_spec)
    : seq_(std::make_shared<const DiscretisationSequence>(std::move(seq))), spec_(pinv_spec) {
    for (int i = 0; i < seq_->size(); ++i) {
        const Scale& s = (*seq_)[i];
        // Equal spaces share one operator pair.
        if (i > 0 && s.image == (*seq_)[i - 1].image && s.geometry == (*seq_)[i - 1].geometry) {
            ray_.push_back(ray_.back());
            pinv_.push_back(pinv_.back());
            grad_scale_.push_back(grad_scale_.back());
            continue;
        }
        ray_.push_back(std::make_shared<const RayTransform>(s.image, s.geometry));
        pinv_.push_back(std::make_shared<const FilteredBackprojection>(s.image, s.geometry, spec_));
        const double fro2 = ray_.back()->squared_frobenius_norm();
        grad_scale_.push_back(fro2 > 0 ? static_cast<double>(s.image.size()) / fro2 : 1.0);
    }
}

template <class T>
LinearMap<T> OperatorSet::forward(int i) const {
    auto op = ray_.at(static_cast<std::size_t>(i));
    return {"A", i, op->image_shape(), op->data_shape(),
            [op](std::span<const T> x, std::span<T> y) { op->forward<T>(x, y); },
            [op](std::span<const T> y, std::span<T> x) { op->adjoint<T>(y, x); }};
}

template <class T>
LinearMap<T> OperatorSet::adjoint(int i) const {
    auto op = ray_.at(static_cast<std::size_t>(i));
    return {"A*", i, op->data_shape(), op->image_shape(),
            [op](std::span<const T> y, std::span<T> x) { op->adjoint<T>(y, x); },
            [op](std::span<const T> x, std::span<T> y) { op->forward<T>(x, y); }};
}

template <class T>
LinearMap<T> OperatorSet::scaled_adjoint(int i) const {
    auto op = ray_.at(static_cast<std::size_t>(i));
    const T c = static_cast<T>(gradient_scale(i));
    return {"A*", i, op->data_shape(), op->image_shape(),
            [op, c](std::span<const T> y, std::span<T> x) {
                op->adjoint<T>(y, x);
                for (auto& v : x) v *= c;
            },
            [op, c](std::span<const T> x, std::span<T> y) {
                op->forward<T>(x, y);
                for (auto& v : y) v *= c;
            }};
}

template <class T>
LinearMap<T> OperatorSet::pseudo_inverse(int i) const {
    auto op = pinv_.at(static_cast<std::size_t>(i));
    return {"A+", i, op->data_shape(), op->grid().shape,
            [op](std::span<const T> y, std::span<T> x) { op->apply<T>(y, x); },
            [op](std::span<const T> x, std::span<T> y) { op->transpose<T>(x, y); }};
}

template <class T>
LinearMap<T> OperatorSet::project(int i) const {
    auto seq = seq_;
    return {"pi", i, data_shape(seq->finest().geometry), data_shape((*seq)[i].geometry),
            [seq, i](std::span<const T> y, std::span<T> out) {
                const auto r = project_data<T>(y, *seq, i);
                std::copy(r.begin(), r.end(), out.begin());
            },
            [seq, i](std::span<const T> c, std::span<T> out) {
                const auto r = project_data_transpose<T>(c, *seq, i);
                std::copy(r.begin(), r.end(), out.begin());
            }};
}

template <class T>
LinearMap<T> OperatorSet::upsample(int i) const {
    if (i < 1 || i >= seq_->size()) throw std::out_of_range("upsample: scale index must lie in [1, N]");
    auto seq = seq_;
    return {"tau", i, (*seq)[i - 1].image.shape, (*seq)[i].image.shape,
            [seq, i](std::span<const T> x, std::span<T> out) {
                const auto r = mslir::upsample<T>(x, *seq, i);
                std::copy(r.begin(), r.end(), out.begin());
            },
            [seq, i](std::span<const T> y, std::span<T> out) {
                const auto r = upsample_vjp<T>(y, *seq, i);
                std::copy(r.begin(), r.end(), out.begin());
            }};
}

#define MSLIR_INSTANTIATE(T)                                            \
    template LinearMap<T> OperatorSet::forward<T>(int) const;           \
    template LinearMap<T> OperatorSet::adjoint<T>(int) const;           \
    template LinearMap<T> OperatorSet::scaled_adjoint<T>(int) const;    \
    template LinearMap<T> OperatorSet::pseudo_inverse<T>(int) const;    \
    template LinearMap<T> OperatorSet::project<T>(int) const;           \
    template LinearMap<T> OperatorSet::upsample<T>(int) const;
MSLIR_INSTANTIATE(float)
MSLIR_INSTANTIATE(double)
#undef MSLIR_INSTANTIATE

}  // namespace mslir
