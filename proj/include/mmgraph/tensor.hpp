#pragma once

// Dense row-major f64 tensors with define-by-run reverse-mode differentiation.
//
// Every op records a backward closure on the thread's active Tape when at least one input
// requires a gradient. Without an active tape ops run in inference mode and nothing is kept.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mmgraph/error.hpp"
#include "mmgraph/parallel.hpp"

namespace mmgraph {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    bool leaf = true;

    std::vector<double>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

class Tensor {
public:
    Tensor() : impl_(std::make_shared<TensorImpl>()) { impl_->shape = {0, 0}; }

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : impl_(std::make_shared<TensorImpl>()) {
        if (shape_numel(shape) != data.size())
            throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                             std::to_string(data.size()) + " values");
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(std::size_t rows, std::size_t cols) {
        return Tensor({rows, cols}, std::vector<double>(rows * cols, 0.0));
    }
    static Tensor full(std::size_t rows, std::size_t cols, double value) {
        return Tensor({rows, cols}, std::vector<double>(rows * cols, value));
    }
    static Tensor identity(std::size_t n) {
        Tensor t = zeros(n, n);
        for (std::size_t i = 0; i < n; ++i) t.impl_->data[i * n + i] = 1.0;
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(data));
    }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }
    bool empty() const { return impl_->data.empty(); }
    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return dim(1); }
    std::size_t dim(std::size_t axis) const {
        if (axis >= rank()) throw ShapeError("tensor: axis out of range for " + shape_str(shape()));
        return impl_->shape[axis];
    }

    std::span<const double> data() const { return impl_->data; }
    double operator()(std::size_t i, std::size_t j) const { return impl_->data[i * cols() + j]; }
    double item() const {
        if (numel() != 1) throw ShapeError("tensor: item() on " + shape_str(shape()));
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    bool is_leaf() const { return impl_->leaf; }
    /// Gradient buffer; all zeros if nothing has been accumulated yet.
    std::span<const double> grad() const { return impl_->ensure_grad(); }
    void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

    /// Writable storage, restricted to leaves (parameters and inputs).
    std::span<double> mutable_data() {
        if (!impl_->leaf) throw Error("tensor: op outputs are immutable");
        return impl_->data;
    }

    /// Copy of the values with no gradient tracking.
    Tensor detach() const { return Tensor(shape(), impl_->data); }
    Tensor& set_requires_grad(bool on) {
        impl_->requires_grad = on;
        return *this;
    }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of executed ops. Backward runs them in exact reverse order and may run once.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(BackwardFn fn) {
        if (consumed_) throw Error("tape: backward already ran; start a new forward pass");
        ops_.push_back(std::move(fn));
    }

    void backward(const Tensor& loss) {
        if (consumed_) throw Error("tape: backward called twice without a new forward pass");
        if (loss.numel() != 1) throw ShapeError("tape: backward needs a scalar loss, got " + shape_str(loss.shape()));
        consumed_ = true;
        if (!loss.requires_grad()) return;
        loss.impl()->ensure_grad()[0] += 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
        ops_.clear();
    }

    std::size_t size() const { return ops_.size(); }
    bool consumed() const { return consumed_; }
    void clear() {
        ops_.clear();
        consumed_ = false;
    }

private:
    std::vector<BackwardFn> ops_;
    bool consumed_ = false;
};

namespace detail {
inline Tape*& active_tape() {
    thread_local Tape* tape = nullptr;
    return tape;
}
}  // namespace detail

/// Makes `tape` the recording target on this thread for the scope's lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) : prev_(detail::active_tape()) { detail::active_tape() = &tape; }
    ~TapeScope() { detail::active_tape() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

inline Tape* active_tape() { return detail::active_tape(); }

namespace detail {

inline void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

/// Attaches `backward` to `out` when a tape is active and any input needs a gradient.
template <class Fn>
void attach(Tensor& out, std::initializer_list<const Tensor*> inputs, Fn&& backward) {
    Tape* tape = active_tape();
    if (!tape) return;
    bool any = false;
    for (const Tensor* in : inputs) any = any || in->requires_grad();
    if (!any) return;
    out.impl()->requires_grad = true;
    out.impl()->leaf = false;
    tape->record(std::forward<Fn>(backward));
}

inline Tensor make(Shape shape) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

inline std::vector<double>& raw(const Tensor& t) { return t.impl()->data; }

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Linear algebra

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

// Products run over fixed row blocks, so the summation order never depends on the worker count.
constexpr std::size_t kGemmRows = 64;
// Below this many multiply-adds the packed GEMM path costs more than it saves.
constexpr std::size_t kLazyProductWork = 1u << 14;

template <class Dst, class L, class R>
void product_into(Dst&& dst, const L& lhs, const R& rhs, bool accumulate, std::size_t work) {
    if (work <= kLazyProductWork) {
        if (accumulate) dst += lhs.lazyProduct(rhs);
        else dst = lhs.lazyProduct(rhs);
    } else {
        if (accumulate) dst.noalias() += lhs * rhs;
        else dst.noalias() = lhs * rhs;
    }
}

template <class Fn>
void gemm_row_blocks(std::size_t rows, std::size_t work, Fn&& fn) {
    const std::size_t blocks = (rows + kGemmRows - 1) / kGemmRows;
    parallel_rows(blocks, work, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
            const std::size_t r0 = b * kGemmRows;
            fn(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(std::min(rows, r0 + kGemmRows) - r0));
        }
    });
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor out = detail::make({m, n});
    using detail::ConstMap, detail::MutMap;
    const auto em = static_cast<Eigen::Index>(m), ek = static_cast<Eigen::Index>(k), en = static_cast<Eigen::Index>(n);
    {
        const ConstMap ma(a.data().data(), em, ek), mb(b.data().data(), ek, en);
        MutMap mc(detail::raw(out).data(), em, en);
        detail::gemm_row_blocks(m, m * k * n, [&](Eigen::Index r0, Eigen::Index r) {
            detail::product_into(mc.middleRows(r0, r), ma.middleRows(r0, r), mb, false, r * ek * en);
        });
    }
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    detail::attach(out, {&a, &b}, [ai, bi, oi, m, k, n, em, ek, en] {
        const ConstMap g(oi->ensure_grad().data(), em, en);
        if (ai->requires_grad) {
            MutMap ga(ai->ensure_grad().data(), em, ek);
            const ConstMap mb(bi->data.data(), ek, en);
            detail::gemm_row_blocks(m, m * k * n, [&](Eigen::Index r0, Eigen::Index r) {
                detail::product_into(ga.middleRows(r0, r), g.middleRows(r0, r), mb.transpose(), true, r * ek * en);
            });
        }
        if (bi->requires_grad) {
            MutMap gb(bi->ensure_grad().data(), ek, en);
            const ConstMap ma(ai->data.data(), em, ek);
            detail::gemm_row_blocks(k, m * k * n, [&](Eigen::Index r0, Eigen::Index r) {
                detail::product_into(gb.middleRows(r0, r), ma.middleCols(r0, r).transpose(), g, true, r * em * en);
            });
        }
    });
    return out;
}

inline Tensor transpose(const Tensor& x) {
    detail::require_rank2(x, "transpose");
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = detail::make({c, r});
    auto& o = detail::raw(out);
    const auto in = x.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) o[j * r + i] = in[i * c + j];
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi, r, c] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Elementwise

namespace detail {
template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd bwd) {
    Tensor out = make(x.shape());
    auto& o = raw(out);
    const auto in = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(in[i]);
    auto xi = x.impl(), oi = out.impl();
    attach(out, {&x}, [xi, oi, bwd] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * bwd(xi->data[i], oi->data[i]);
    });
    return out;
}
}  // namespace detail

/// max(0, x); the subgradient at exactly 0 is 0.
inline Tensor relu(const Tensor& x) {
    return detail::unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

inline Tensor tanh(const Tensor& x) {
    return detail::unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor square(const Tensor& x) {
    return detail::unary(
        x, [](double v) { return v * v; }, [](double in, double) { return 2.0 * in; });
}

inline Tensor scale(const Tensor& x, double c) {
    return detail::unary(
        x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
    return detail::unary(
        x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    Tensor out = detail::make(a.shape());
    auto& o = detail::raw(out);
    const auto pa = a.data(), pb = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[i] + pb[i];
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    detail::attach(out, {&a, &b}, [ai, bi, oi] {
        auto& g = oi->ensure_grad();
        for (auto* in : {ai.get(), bi.get()}) {
            if (!in->requires_grad) continue;
            auto& gi = in->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

/// x[T×d] + bias[1×d] on every row.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
    detail::require_rank2(x, "add_bias");
    if (bias.numel() != x.cols())
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = detail::make(x.shape());
    auto& o = detail::raw(out);
    const auto px = x.data(), pb = bias.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) o[i * c + j] = px[i * c + j] + pb[j];
    auto xi = x.impl(), bi = bias.impl(), oi = out.impl();
    detail::attach(out, {&x, &bias}, [xi, bi, oi, r, c] {
        auto& g = oi->ensure_grad();
        if (xi->requires_grad) {
            auto& gx = xi->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (bi->requires_grad) {
            auto& gb = bi->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi] {
        const double g = oi->ensure_grad()[0];
        for (double& v : xi->ensure_grad()) v += g;
    });
    return out;
}

inline Tensor mean(const Tensor& x) {
    if (x.empty()) throw ShapeError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

/// Per-row sums, T×d → T×1.
inline Tensor row_sums(const Tensor& x) {
    detail::require_rank2(x, "row_sums");
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = detail::make({r, 1});
    auto& o = detail::raw(out);
    const auto px = x.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) o[i] += px[i * c + j];
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi, r, c] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i];
    });
    return out;
}

/// Mean over rows, T×d → 1×d.
inline Tensor row_mean(const Tensor& x) {
    detail::require_rank2(x, "row_mean");
    const std::size_t r = x.rows(), c = x.cols();
    if (r == 0) throw ShapeError("row_mean: no rows");
    Tensor out = detail::make({1, c});
    auto& o = detail::raw(out);
    const auto px = x.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) o[j] += px[i * c + j];
    for (double& v : o) v /= static_cast<double>(r);
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi, r, c] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        const double inv = 1.0 / static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j] * inv;
    });
    return out;
}

/// Mean absolute error between equally shaped tensors. Subgradient of |0| is 0.
inline Tensor mae(const Tensor& pred, const Tensor& target) {
    detail::require_same_shape(pred, target, "mae");
    if (pred.empty()) throw ShapeError("mae: empty input");
    const auto p = pred.data(), t = target.data();
    const double n = static_cast<double>(p.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - t[i]);
    Tensor out = Tensor::scalar(s / n);
    auto pi = pred.impl(), ti = target.impl(), oi = out.impl();
    detail::attach(out, {&pred, &target}, [pi, ti, oi, n] {
        const double g = oi->ensure_grad()[0] / n;
        for (std::size_t i = 0; i < pi->data.size(); ++i) {
            const double diff = pi->data[i] - ti->data[i];
            const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            if (pi->requires_grad) pi->ensure_grad()[i] += g * sgn;
            if (ti->requires_grad) ti->ensure_grad()[i] -= g * sgn;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Row normalizations

inline constexpr double kNormEps = 1e-12;

/// Each row divided by its L2 norm; an all-zero row is divided by `eps` and stays zero.
inline Tensor row_l2_normalize(const Tensor& x, double eps = kNormEps) {
    detail::require_rank2(x, "row_l2_normalize");
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = detail::make(x.shape());
    auto& o = detail::raw(out);
    const auto px = x.data();
    std::vector<double> denom(r);
    for (std::size_t i = 0; i < r; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < c; ++j) ss += px[i * c + j] * px[i * c + j];
        const double norm = std::sqrt(ss);
        denom[i] = norm > 0.0 ? norm : eps;
        for (std::size_t j = 0; j < c; ++j) o[i * c + j] = px[i * c + j] / denom[i];
    }
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi, r, c, denom = std::move(denom)] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        const auto& y = oi->data;
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * g[i * c + j];
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += (g[i * c + j] - y[i * c + j] * dot) / denom[i];
        }
    });
    return out;
}

/// x_ij / (Σ_v x_iv + eps), for non-negative x.
inline Tensor row_normalize(const Tensor& x, double eps) {
    detail::require_rank2(x, "row_normalize");
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = detail::make(x.shape());
    auto& o = detail::raw(out);
    const auto px = x.data();
    std::vector<double> denom(r);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += px[i * c + j];
        denom[i] = s + eps;
        if (denom[i] == 0.0) continue;  // all-zero row with eps = 0 stays zero
        for (std::size_t j = 0; j < c; ++j) o[i * c + j] = px[i * c + j] / denom[i];
    }
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi, r, c, denom = std::move(denom)] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        const auto& y = oi->data;
        for (std::size_t i = 0; i < r; ++i) {
            if (denom[i] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += (g[i * c + j] - dot) / denom[i];
        }
    });
    return out;
}

/// A + I for square A.
inline Tensor add_identity(const Tensor& a) {
    detail::require_rank2(a, "add_identity");
    if (a.rows() != a.cols()) throw ShapeError("add_identity: not square " + shape_str(a.shape()));
    const std::size_t n = a.rows();
    Tensor out = Tensor(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
    auto& o = detail::raw(out);
    for (std::size_t i = 0; i < n; ++i) o[i * n + i] += 1.0;
    auto ai = a.impl(), oi = out.impl();
    detail::attach(out, {&a}, [ai, oi] {
        auto& g = oi->ensure_grad();
        auto& ga = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Structural

/// Stacks matrices vertically; empty inputs (zero rows) are skipped.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    std::size_t rows = 0, cols = 0;
    bool have_cols = false;
    for (const auto& p : parts) {
        detail::require_rank2(p, "concat_rows");
        if (p.rows() == 0) continue;
        if (have_cols && p.cols() != cols)
            throw ShapeError("concat_rows: width " + std::to_string(p.cols()) + " vs " + std::to_string(cols));
        cols = p.cols();
        have_cols = true;
        rows += p.rows();
    }
    Tensor out = detail::make({rows, cols});
    auto& o = detail::raw(out);
    std::size_t off = 0;
    for (const auto& p : parts) {
        if (p.rows() == 0) continue;
        std::copy(p.data().begin(), p.data().end(), o.begin() + static_cast<std::ptrdiff_t>(off));
        off += p.numel();
    }
    Tape* tape = active_tape();
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (tape && any) {
        std::vector<std::shared_ptr<TensorImpl>> ins;
        for (const auto& p : parts)
            if (p.rows() != 0) ins.push_back(p.impl());
        auto oi = out.impl();
        oi->requires_grad = true;
        oi->leaf = false;
        tape->record([ins = std::move(ins), oi] {
            auto& g = oi->ensure_grad();
            std::size_t off = 0;
            for (const auto& in : ins) {
                if (in->requires_grad) {
                    auto& gi = in->ensure_grad();
                    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[off + i];
                }
                off += in->data.size();
            }
        });
    }
    return out;
}

/// Places matrices side by side; every input must have the same row count.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) return Tensor();
    std::size_t rows = 0, cols = 0;
    bool have_rows = false;
    for (const auto& p : parts) {
        detail::require_rank2(p, "concat_cols");
        if (p.cols() == 0) continue;
        if (have_rows && p.rows() != rows)
            throw ShapeError("concat_cols: height " + std::to_string(p.rows()) + " vs " + std::to_string(rows));
        rows = p.rows();
        have_rows = true;
        cols += p.cols();
    }
    Tensor out = detail::make({rows, cols});
    auto& o = detail::raw(out);
    std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> ins;  // (input, column offset)
    std::size_t off = 0;
    for (const auto& p : parts) {
        if (p.cols() == 0) continue;
        const std::size_t c = p.cols();
        const auto pd = p.data();
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < c; ++j) o[i * cols + off + j] = pd[i * c + j];
        ins.emplace_back(p.impl(), off);
        off += c;
    }
    Tape* tape = active_tape();
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (tape && any) {
        auto oi = out.impl();
        oi->requires_grad = true;
        oi->leaf = false;
        tape->record([ins = std::move(ins), oi, rows, cols] {
            auto& g = oi->ensure_grad();
            for (const auto& [in, off] : ins) {
                if (!in->requires_grad) continue;
                const std::size_t c = in->shape[1];
                auto& gi = in->ensure_grad();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < c; ++j) gi[i * c + j] += g[i * cols + off + j];
            }
        });
    }
    return out;
}

/// Rows [begin, end).
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    detail::require_rank2(x, "slice_rows");
    if (begin > end || end > x.rows())
        throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_str(x.shape()));
    const std::size_t c = x.cols();
    const auto px = x.data();
    Tensor out({end - begin, c}, std::vector<double>(px.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                                     px.begin() + static_cast<std::ptrdiff_t>(end * c)));
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi, begin, c] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[begin * c + i] += g[i];
    });
    return out;
}

/// Slab `index` of a rank-3 tensor [k×r×c] as an r×c matrix.
inline Tensor take(const Tensor& x, std::size_t index) {
    if (x.rank() != 3) throw ShapeError("take: expected rank 3, got " + shape_str(x.shape()));
    if (index >= x.dim(0)) throw ShapeError("take: index out of range");
    const std::size_t r = x.dim(1), c = x.dim(2), off = index * r * c;
    const auto px = x.data();
    Tensor out({r, c}, std::vector<double>(px.begin() + static_cast<std::ptrdiff_t>(off),
                                           px.begin() + static_cast<std::ptrdiff_t>(off + r * c)));
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi, off] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
    });
    return out;
}

/// Causal shift: row t of the result is row t - k of x, zero for t < k.
inline Tensor shift_rows(const Tensor& x, std::size_t k) {
    detail::require_rank2(x, "shift_rows");
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = detail::make(x.shape());
    auto& o = detail::raw(out);
    const auto px = x.data();
    for (std::size_t t = k; t < r; ++t)
        for (std::size_t j = 0; j < c; ++j) o[t * c + j] = px[(t - k) * c + j];
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi, k, r, c] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        for (std::size_t t = k; t < r; ++t)
            for (std::size_t j = 0; j < c; ++j) gx[(t - k) * c + j] += g[t * c + j];
    });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Window reductions (graph pooling substrate)

/// Half-open row range [begin, end).
struct Window {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    friend bool operator==(const Window&, const Window&) = default;
};

enum class Reduce { Mean, Max };

/// Consecutive windows of `s` rows over [0, n); the last one may be shorter.
inline std::vector<Window> uniform_windows(std::size_t n, std::size_t s) {
    if (s == 0) throw ShapeError("uniform_windows: window size must be >= 1");
    std::vector<Window> w;
    for (std::size_t b = 0; b < n; b += s) w.push_back({b, std::min(n, b + s)});
    return w;
}

namespace detail {
inline void check_windows(const std::vector<Window>& windows, std::size_t n, const char* op) {
    std::size_t expect = 0;
    for (const auto& w : windows) {
        if (w.begin != expect || w.end <= w.begin)
            throw ShapeError(std::string(op) + ": windows must tile the rows in order");
        expect = w.end;
    }
    if (expect != n) throw ShapeError(std::string(op) + ": windows cover " + std::to_string(expect) + " of " +
                                      std::to_string(n) + " rows");
}
}  // namespace detail

/// 1-D pooling of rows: output row w reduces rows of window w column-wise.
inline Tensor window_reduce_rows(const Tensor& x, const std::vector<Window>& windows, Reduce mode) {
    detail::require_rank2(x, "window_reduce_rows");
    detail::check_windows(windows, x.rows(), "window_reduce_rows");
    const std::size_t c = x.cols(), m = windows.size();
    Tensor out = detail::make({m, c});
    auto& o = detail::raw(out);
    const auto px = x.data();
    std::vector<std::size_t> argmax;  // source row per output entry (Max)
    if (mode == Reduce::Max) argmax.resize(m * c);
    for (std::size_t w = 0; w < m; ++w) {
        const auto [b, e] = windows[w];
        for (std::size_t j = 0; j < c; ++j) {
            if (mode == Reduce::Mean) {
                double s = 0.0;
                for (std::size_t i = b; i < e; ++i) s += px[i * c + j];
                o[w * c + j] = s / static_cast<double>(e - b);
            } else {
                std::size_t best = b;
                for (std::size_t i = b + 1; i < e; ++i)
                    if (px[i * c + j] > px[best * c + j]) best = i;
                o[w * c + j] = px[best * c + j];
                argmax[w * c + j] = best;
            }
        }
    }
    auto xi = x.impl(), oi = out.impl();
    detail::attach(out, {&x}, [xi, oi, windows, mode, c, argmax = std::move(argmax)] {
        auto& g = oi->ensure_grad();
        auto& gx = xi->ensure_grad();
        for (std::size_t w = 0; w < windows.size(); ++w) {
            const auto [b, e] = windows[w];
            for (std::size_t j = 0; j < c; ++j) {
                const double gv = g[w * c + j];
                if (mode == Reduce::Mean) {
                    const double share = gv / static_cast<double>(e - b);
                    for (std::size_t i = b; i < e; ++i) gx[i * c + j] += share;
                } else {
                    gx[argmax[w * c + j] * c + j] += gv;
                }
            }
        }
    });
    return out;
}

/// 2-D pooling of a square matrix over the block grid windows × windows.
inline Tensor window_reduce_blocks(const Tensor& a, const std::vector<Window>& windows, Reduce mode) {
    detail::require_rank2(a, "window_reduce_blocks");
    if (a.rows() != a.cols()) throw ShapeError("window_reduce_blocks: not square " + shape_str(a.shape()));
    detail::check_windows(windows, a.rows(), "window_reduce_blocks");
    const std::size_t n = a.rows(), m = windows.size();
    Tensor out = detail::make({m, m});
    auto& o = detail::raw(out);
    const auto pa = a.data();
    std::vector<std::size_t> argmax;
    if (mode == Reduce::Max) argmax.resize(m * m);
    for (std::size_t x = 0; x < m; ++x) {
        for (std::size_t y = 0; y < m; ++y) {
            const auto [rb, re] = windows[x];
            const auto [cb, ce] = windows[y];
            if (mode == Reduce::Mean) {
                double s = 0.0;
                for (std::size_t i = rb; i < re; ++i)
                    for (std::size_t j = cb; j < ce; ++j) s += pa[i * n + j];
                o[x * m + y] = s / static_cast<double>((re - rb) * (ce - cb));
            } else {
                std::size_t best = rb * n + cb;
                for (std::size_t i = rb; i < re; ++i)
                    for (std::size_t j = cb; j < ce; ++j)
                        if (pa[i * n + j] > pa[best]) best = i * n + j;
                o[x * m + y] = pa[best];
                argmax[x * m + y] = best;
            }
        }
    }
    auto ai = a.impl(), oi = out.impl();
    detail::attach(out, {&a}, [ai, oi, windows, mode, n, m, argmax = std::move(argmax)] {
        auto& g = oi->ensure_grad();
        auto& ga = ai->ensure_grad();
        for (std::size_t x = 0; x < m; ++x) {
            for (std::size_t y = 0; y < m; ++y) {
                const double gv = g[x * m + y];
                if (mode == Reduce::Max) {
                    ga[argmax[x * m + y]] += gv;
                    continue;
                }
                const auto [rb, re] = windows[x];
                const auto [cb, ce] = windows[y];
                const double share = gv / static_cast<double>((re - rb) * (ce - cb));
                for (std::size_t i = rb; i < re; ++i)
                    for (std::size_t j = cb; j < ce; ++j) ga[i * n + j] += share;
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Metrics (not differentiable)

/// Pearson correlation; nullopt when either input has zero variance.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
    if (a.empty()) throw ShapeError("pearson: empty input");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace mmgraph
