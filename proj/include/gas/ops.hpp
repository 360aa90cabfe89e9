#pragma once

#include <algorithm>
#include <cmath>

#include "gas/tensor.hpp"

// Differentiable op library. Every op validates shapes (errors name the op and
// the offending shapes), checks outputs for non-finite values, and records a
// backward closure on the active tape when any input is tracked.
//
// Parallel loops give each output element to exactly one thread with a fixed
// sequential inner reduction, so results are bit-identical for any thread
// count.

#if defined(__GNUC__) || defined(__clang__)
#define RESTRICT __restrict__
#else
#define RESTRICT
#endif

namespace gas {

namespace detail {

template <typename S>
inline void check_finite(const Tensor<S>& t, const char* op) {
    const S* p = t.data();
    const long n = t.numel();
    // x - x is 0 for finite x and NaN otherwise; the sum vectorizes and a
    // single comparison catches both NaN and infinity
    S acc = 0;
#pragma omp simd reduction(+ : acc)
    for (long i = 0; i < n; ++i) acc += p[i] - p[i];
    if (acc == S(0)) return;
    for (long i = 0; i < n; ++i)
        if (!std::isfinite((double)p[i]))
            fail(str("non-finite output in ", op, " at flat index ", i));
    fail(str("non-finite output in ", op));
}

template <typename S>
inline bool tracking(const Tensor<S>& a) {
    return active_tape<S>() != nullptr && a.tracked();
}
template <typename S>
inline bool tracking(const Tensor<S>& a, const Tensor<S>& b) {
    return active_tape<S>() != nullptr && (a.tracked() || b.tracked());
}
template <typename S>
inline bool tracking(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& c) {
    return active_tape<S>() != nullptr && (a.tracked() || b.tracked() || c.tracked());
}

template <typename S>
inline void record(Tensor<S>& out, std::function<void()> fn) {
    out.mark_on_tape();
    active_tape<S>()->record(std::move(fn));
}

template <typename S>
inline void same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    require(a.shape() == b.shape(),
            str(op, ": shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S, typename FwdFn, typename BwdA, typename BwdB>
Tensor<S> binary_ew(const Tensor<S>& a, const Tensor<S>& b, const char* op, FwdFn f, BwdA dfa, BwdB dfb) {
    detail::same_shape(a, b, op);
    Tensor<S> out(a.shape());
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    const long n = out.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (long i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    detail::check_finite(out, op);
    if (detail::tracking(a, b)) {
        Tensor<S> ac = a, bc = b, oc = out;
        detail::record(out, [ac, bc, oc, dfa, dfb, n]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            const S* pa = ac.data();
            const S* pb = bc.data();
            if (ac.tracked()) {
                S* ga = ac.grad().data();
                for (long i = 0; i < n; ++i) ga[i] += go[i] * dfa(pa[i], pb[i]);
            }
            if (bc.tracked()) {
                S* gb = bc.grad().data();
                for (long i = 0; i < n; ++i) gb[i] += go[i] * dfb(pa[i], pb[i]);
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_ew(a, b, "add", [](S x, S y) { return x + y; },
                     [](S, S) { return S(1); }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_ew(a, b, "sub", [](S x, S y) { return x - y; },
                     [](S, S) { return S(1); }, [](S, S) { return S(-1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_ew(a, b, "mul", [](S x, S y) { return x * y; },
                     [](S, S y) { return y; }, [](S x, S) { return x; });
}

template <typename S>
Tensor<S> divide(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_ew(a, b, "div", [](S x, S y) { return x / y; },
                     [](S, S y) { return S(1) / y; },
                     [](S x, S y) { return -x / (y * y); });
}

template <typename S, typename FwdFn, typename BwdFn>
Tensor<S> unary_ew(const Tensor<S>& a, const char* op, FwdFn f, BwdFn df) {
    Tensor<S> out(a.shape());
    const S* pa = a.data();
    S* po = out.data();
    const long n = out.numel();
#pragma omp parallel for schedule(static) if (n > 32768)
    for (long i = 0; i < n; ++i) po[i] = f(pa[i]);
    detail::check_finite(out, op);
    if (detail::tracking(a)) {
        Tensor<S> ac = a, oc = out;
        detail::record(out, [ac, oc, df, n]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            const S* pa = ac.data();
            S* ga = ac.grad().data();
#pragma omp parallel for schedule(static) if (n > 32768)
            for (long i = 0; i < n; ++i) ga[i] += go[i] * df(pa[i]);
        });
    }
    return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S k) {
    return unary_ew(a, "scale", [k](S x) { return k * x; }, [k](S) { return k; });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S k) {
    return unary_ew(a, "add_scalar", [k](S x) { return x + k; }, [](S) { return S(1); });
}

template <typename S>
inline S sigmoid_val(S x) {
    return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

// sigmoid/silu/softplus reuse forward results in their backward closures
// instead of re-evaluating exp.

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
    Tensor<S> out(a.shape());
    const S* pa = a.data();
    S* po = out.data();
    const long n = out.numel();
#pragma omp parallel for schedule(static) if (n > 32768)
    for (long i = 0; i < n; ++i) po[i] = sigmoid_val(pa[i]);
    detail::check_finite(out, "sigmoid");
    if (detail::tracking(a)) {
        Tensor<S> ac = a, oc = out;
        detail::record(out, [ac, oc, n]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            const S* y = oc.data();
            S* ga = ac.grad().data();
#pragma omp parallel for schedule(static) if (n > 65536)
            for (long i = 0; i < n; ++i) ga[i] += go[i] * y[i] * (S(1) - y[i]);
        });
    }
    return out;
}

template <typename S>
Tensor<S> silu(const Tensor<S>& a) {
    Tensor<S> out(a.shape());
    auto sig = std::make_shared<std::vector<S>>(a.numel());
    const S* pa = a.data();
    S* po = out.data();
    S* ps = sig->data();
    const long n = out.numel();
#pragma omp parallel for schedule(static) if (n > 32768)
    for (long i = 0; i < n; ++i) {
        ps[i] = sigmoid_val(pa[i]);
        po[i] = pa[i] * ps[i];
    }
    detail::check_finite(out, "silu");
    if (detail::tracking(a)) {
        Tensor<S> ac = a, oc = out;
        detail::record(out, [ac, oc, sig, n]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            const S* pa = ac.data();
            const S* ps = sig->data();
            S* ga = ac.grad().data();
#pragma omp parallel for schedule(static) if (n > 65536)
            for (long i = 0; i < n; ++i) {
                const S s = ps[i];
                ga[i] += go[i] * (s + pa[i] * s * (S(1) - s));
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& a) {
    Tensor<S> out(a.shape());
    const S* pa = a.data();
    S* po = out.data();
    const long n = out.numel();
#pragma omp parallel for schedule(static) if (n > 32768)
    for (long i = 0; i < n; ++i) {
        const S x = pa[i];
        // softplus(x) = log(1 + e^x), evaluated as x + log1p(e^-x) for large x
        po[i] = x > S(20) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    detail::check_finite(out, "softplus");
    if (detail::tracking(a)) {
        Tensor<S> ac = a, oc = out;
        detail::record(out, [ac, oc, n]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            const S* y = oc.data();
            S* ga = ac.grad().data();
#pragma omp parallel for schedule(static) if (n > 65536)
            for (long i = 0; i < n; ++i) ga[i] += go[i] * (S(1) - std::exp(-y[i]));  // sigmoid(x)
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
    require(numel_of(shape) == a.numel(),
            detail::str("reshape: cannot view ", shape_str(a.shape()), " as ", shape_str(shape)));
    Tensor<S> out = Tensor<S>::from(std::move(shape), a.values());
    if (detail::tracking(a)) {
        Tensor<S> ac = a, oc = out;
        detail::record(out, [ac, oc]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            S* ga = ac.grad().data();
            const long n = ac.numel();
            for (long i = 0; i < n; ++i) ga[i] += go[i];
        });
    }
    return out;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
    require(!parts.empty(), "concat: no inputs");
    Shape shape = parts[0].shape();
    require(axis >= 0 && axis < (int)shape.size(), "concat: bad axis");
    int total = 0;
    for (auto& p : parts) {
        require(p.rank() == (int)shape.size(), "concat: rank mismatch");
        for (int d = 0; d < p.rank(); ++d)
            if (d != axis)
                require(p.dim(d) == shape[d],
                        detail::str("concat: shape mismatch ", shape_str(p.shape()), " vs ", shape_str(shape), " on axis ", d));
        total += p.dim(axis);
    }
    shape[axis] = total;
    Tensor<S> out(shape);

    long outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= shape[d];
    for (int d = axis + 1; d < (int)shape.size(); ++d) inner *= shape[d];

    long offset = 0;
    for (auto& p : parts) {
        const long blk = (long)p.dim(axis) * inner;
        const S* src = p.data();
        S* dst = out.data();
        for (long o = 0; o < outer; ++o)
            std::copy(src + o * blk, src + (o + 1) * blk, dst + o * (long)total * inner + offset);
        offset += blk;
    }

    bool track = active_tape<S>() != nullptr &&
                 std::any_of(parts.begin(), parts.end(), [](const Tensor<S>& p) { return p.tracked(); });
    if (track) {
        std::vector<Tensor<S>> pc = parts;
        Tensor<S> oc = out;
        detail::record(out, [pc, oc, outer, inner, total]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            long offset = 0;
            for (auto& p : pc) {
                const long pb = p.numel() / outer;
                if (p.tracked()) {
                    S* gp = p.grad().data();
                    for (long o = 0; o < outer; ++o) {
                        const S* src = go + o * (long)total * inner + offset;
                        S* dst = gp + o * pb;
                        for (long i = 0; i < pb; ++i) dst[i] += src[i];
                    }
                }
                offset += pb;
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> slice(const Tensor<S>& a, int axis, int start, int len) {
    require(axis >= 0 && axis < a.rank(), "slice: bad axis");
    require(start >= 0 && len >= 0 && start + len <= a.dim(axis),
            detail::str("slice: range [", start, ",", start + len, ") out of bounds for ",
                        shape_str(a.shape()), " axis ", axis));
    Shape shape = a.shape();
    shape[axis] = len;
    Tensor<S> out(shape);

    long outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
    const long src_blk = (long)a.dim(axis) * inner;
    const long dst_blk = (long)len * inner;

    const S* src = a.data();
    S* dst = out.data();
    for (long o = 0; o < outer; ++o)
        std::copy(src + o * src_blk + (long)start * inner, src + o * src_blk + (long)(start + len) * inner,
                  dst + o * dst_blk);

    if (detail::tracking(a)) {
        Tensor<S> ac = a, oc = out;
        detail::record(out, [ac, oc, outer, inner, src_blk, dst_blk, start]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            S* ga = ac.grad().data();
            for (long o = 0; o < outer; ++o) {
                S* dst = ga + o * src_blk + (long)start * inner;
                const S* src = go + o * dst_blk;
                for (long i = 0; i < dst_blk; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> permute(const Tensor<S>& a, const std::vector<int>& perm) {
    require((int)perm.size() == a.rank(), "permute: rank mismatch");
    const int r = a.rank();
    Shape out_shape(r);
    for (int d = 0; d < r; ++d) out_shape[d] = a.dim(perm[d]);
    Tensor<S> out(out_shape);

    std::vector<long> in_stride(r, 1), out_stride(r, 1);
    for (int d = r - 2; d >= 0; --d) in_stride[d] = in_stride[d + 1] * a.dim(d + 1);
    for (int d = r - 2; d >= 0; --d) out_stride[d] = out_stride[d + 1] * out_shape[d + 1];
    // stride in the input for each output axis
    std::vector<long> gather(r);
    for (int d = 0; d < r; ++d) gather[d] = in_stride[perm[d]];

    const long n = out.numel();
    const S* src = a.data();
    S* dst = out.data();
    std::vector<int> idx(r, 0);
    long src_off = 0;
    for (long i = 0; i < n; ++i) {
        dst[i] = src[src_off];
        for (int d = r - 1; d >= 0; --d) {
            idx[d]++;
            src_off += gather[d];
            if (idx[d] < out_shape[d]) break;
            src_off -= (long)out_shape[d] * gather[d];
            idx[d] = 0;
        }
    }

    if (detail::tracking(a)) {
        Tensor<S> ac = a, oc = out;
        detail::record(out, [ac, oc, gather, out_shape, n, r]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            S* ga = ac.grad().data();
            std::vector<int> idx(r, 0);
            long src_off = 0;
            for (long i = 0; i < n; ++i) {
                ga[src_off] += go[i];
                for (int d = r - 1; d >= 0; --d) {
                    idx[d]++;
                    src_off += gather[d];
                    if (idx[d] < out_shape[d]) break;
                    src_off -= (long)out_shape[d] * gather[d];
                    idx[d] = 0;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
    Tensor<S> out(Shape{1});
    const S* pa = a.data();
    S acc = 0;
    const long n = a.numel();
    for (long i = 0; i < n; ++i) acc += pa[i];
    out.data()[0] = acc;
    detail::check_finite(out, "sum");
    if (detail::tracking(a)) {
        Tensor<S> ac = a, oc = out;
        detail::record(out, [ac, oc, n]() mutable {
            if (!oc.has_grad()) return;
            const S g = oc.grad()[0];
            S* ga = ac.grad().data();
            for (long i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return out;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& a) {
    return scale(sum_all(a), S(1) / S(a.numel()));
}

// mean squared error between two same-shape tensors -> scalar
template <typename S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
    detail::same_shape(a, b, "mse");
    Tensor<S> out(Shape{1});
    const S* pa = a.data();
    const S* pb = b.data();
    const long n = a.numel();
    S acc = 0;
    for (long i = 0; i < n; ++i) {
        const S d = pa[i] - pb[i];
        acc += d * d;
    }
    out.data()[0] = acc / S(n);
    detail::check_finite(out, "mse");
    if (detail::tracking(a, b)) {
        Tensor<S> ac = a, bc = b, oc = out;
        detail::record(out, [ac, bc, oc, n]() mutable {
            if (!oc.has_grad()) return;
            const S g = oc.grad()[0] * S(2) / S(n);
            const S* pa = ac.data();
            const S* pb = bc.data();
            if (ac.tracked()) {
                S* ga = ac.grad().data();
                for (long i = 0; i < n; ++i) ga[i] += g * (pa[i] - pb[i]);
            }
            if (bc.tracked()) {
                S* gb = bc.grad().data();
                for (long i = 0; i < n; ++i) gb[i] -= g * (pa[i] - pb[i]);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

namespace detail {
// C[m,n] += A[m,k] * B[k,n]; each output row is owned by one iteration.
template <typename S>
void gemm_acc(const S* A, const S* B, S* C, long m, long k, long n) {
#pragma omp parallel for schedule(static) if (m * n * k > (1L << 16))
    for (long i = 0; i < m; ++i) {
        S* crow = C + i * n;
        const S* arow = A + i * k;
        for (long p = 0; p < k; ++p) {
            const S a = arow[p];
            const S* brow = B + p * n;
            for (long j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}
// C[m,n] += A^T[k,m]^T... i.e. C = A'B where A is [k,m]: C[i,j] += A[p,i]*B[p,j]
template <typename S>
void gemm_at_b(const S* A, const S* B, S* C, long k, long m, long n) {
#pragma omp parallel for schedule(static) if (m * n * k > (1L << 16))
    for (long i = 0; i < m; ++i) {
        S* crow = C + i * n;
        for (long p = 0; p < k; ++p) {
            const S a = A[p * m + i];
            const S* brow = B + p * n;
            for (long j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}
// C[m,k] += A[m,n] * B^T where B is [k,n]: C[i,p] += A[i,j]*B[p,j]
// simd reduction: the partial-sum order is fixed by the build, so results are
// reproducible run to run
template <typename S>
void gemm_a_bt(const S* RESTRICT A, const S* RESTRICT B, S* RESTRICT C, long m, long n, long k) {
#pragma omp parallel for schedule(static) if (m * n * k > (1L << 16))
    for (long i = 0; i < m; ++i) {
        const S* arow = A + i * n;
        S* crow = C + i * k;
        for (long p = 0; p < k; ++p) {
            const S* brow = B + p * n;
            S acc = 0;
#pragma omp simd reduction(+ : acc)
            for (long j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}
}  // namespace detail

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
            detail::str("matmul: incompatible shapes ", shape_str(a.shape()), " x ", shape_str(b.shape())));
    const long m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<S> out(Shape{(int)m, (int)n});
    detail::gemm_acc(a.data(), b.data(), out.data(), m, k, n);
    detail::check_finite(out, "matmul");
    if (detail::tracking(a, b)) {
        Tensor<S> ac = a, bc = b, oc = out;
        detail::record(out, [ac, bc, oc, m, k, n]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            if (ac.tracked()) detail::gemm_a_bt(go, bc.data(), ac.grad().data(), m, n, k);
            if (bc.tracked()) detail::gemm_at_b(ac.data(), go, bc.grad().data(), m, k, n);
        });
    }
    return out;
}

// batched matmul: [B,m,k] x [B,k,n] -> [B,m,n]
template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b) {
    require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
            detail::str("bmm: incompatible shapes ", shape_str(a.shape()), " x ", shape_str(b.shape())));
    const long B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    Tensor<S> out(Shape{(int)B, (int)m, (int)n});
    for (long q = 0; q < B; ++q)
        detail::gemm_acc(a.data() + q * m * k, b.data() + q * k * n, out.data() + q * m * n, m, k, n);
    detail::check_finite(out, "bmm");
    if (detail::tracking(a, b)) {
        Tensor<S> ac = a, bc = b, oc = out;
        detail::record(out, [ac, bc, oc, B, m, k, n]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            for (long q = 0; q < B; ++q) {
                if (ac.tracked())
                    detail::gemm_a_bt(go + q * m * n, bc.data() + q * k * n, ac.grad().data() + q * m * k, m, n, k);
                if (bc.tracked())
                    detail::gemm_at_b(ac.data() + q * m * k, go + q * m * n, bc.grad().data() + q * k * n, m, k, n);
            }
        });
    }
    return out;
}

// broadcast add of y over the leading axis of x: x[i, ...] + y[...]
template <typename S>
Tensor<S> add_broadcast0(const Tensor<S>& x, const Tensor<S>& y) {
    require(x.rank() >= 2, "add_broadcast0: x must have rank >= 2");
    require((long)y.numel() * x.dim(0) == x.numel(),
            detail::str("add_broadcast0: shape mismatch ", shape_str(x.shape()), " + ", shape_str(y.shape())));
    Tensor<S> out(x.shape());
    const long lead = x.dim(0), inner = y.numel();
    const S* px = x.data();
    const S* py = y.data();
    S* po = out.data();
    for (long o = 0; o < lead; ++o)
        for (long i = 0; i < inner; ++i) po[o * inner + i] = px[o * inner + i] + py[i];
    detail::check_finite(out, "add_broadcast0");
    if (detail::tracking(x, y)) {
        Tensor<S> xc = x, yc = y, oc = out;
        detail::record(out, [xc, yc, oc, lead, inner]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            if (xc.tracked()) {
                S* gx = xc.grad().data();
                const long n = lead * inner;
                for (long i = 0; i < n; ++i) gx[i] += go[i];
            }
            if (yc.tracked()) {
                S* gy = yc.grad().data();
                for (long o = 0; o < lead; ++o)
                    for (long i = 0; i < inner; ++i) gy[i] += go[o * inner + i];
            }
        });
    }
    return out;
}

// x [N,C,H,W] + b[C] broadcast over batch and spatial dims
template <typename S>
Tensor<S> add_channel_bias(const Tensor<S>& x, const Tensor<S>& b) {
    require(x.rank() == 4 && b.rank() == 1 && b.dim(0) == x.dim(1),
            detail::str("add_channel_bias: shapes ", shape_str(x.shape()), " + ", shape_str(b.shape())));
    const int N = x.dim(0), C = x.dim(1);
    const long M = (long)x.dim(2) * x.dim(3);
    Tensor<S> out(x.shape());
    const S* px = x.data();
    const S* pb = b.data();
    S* po = out.data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const S bias = pb[c];
            const long base = ((long)n * C + c) * M;
            for (long i = 0; i < M; ++i) po[base + i] = px[base + i] + bias;
        }
    detail::check_finite(out, "add_channel_bias");
    if (detail::tracking(x, b)) {
        Tensor<S> xc = x, bc = b, oc = out;
        detail::record(out, [xc, bc, oc, N, C, M]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            if (xc.tracked()) {
                S* gx = xc.grad().data();
                const long n = (long)N * C * M;
                for (long i = 0; i < n; ++i) gx[i] += go[i];
            }
            if (bc.tracked()) {
                S* gb = bc.grad().data();
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c) {
                        const long base = ((long)n * C + c) * M;
                        S acc = 0;
                        for (long i = 0; i < M; ++i) acc += go[base + i];
                        gb[c] += acc;
                    }
            }
        });
    }
    return out;
}

// x[n,in] * W[in,out] + b[out]
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0) && b.numel() == w.dim(1),
            detail::str("linear: incompatible shapes x=", shape_str(x.shape()), " W=", shape_str(w.shape()),
                        " b=", shape_str(b.shape())));
    return add_broadcast0(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// conv / norm / resampling
// ---------------------------------------------------------------------------

// x [N,Ci,H,W], w [Co,Ci,kh,kw], b [Co]; zero padding. Runs as im2col +
// gemm; the column buffer is kept for the backward pass.
namespace detail {
// cols [Ci*kh*kw, N*Ho*Wo]
template <typename S>
void im2col(const S* x, int N, int Ci, int H, int W, int kh, int kw, int Ho, int Wo, int stride, int pad,
            S* cols) {
    const long X = (long)N * Ho * Wo;
#pragma omp parallel for schedule(static) if (N > 1)
    for (int n = 0; n < N; ++n)
        for (int ci = 0; ci < Ci; ++ci) {
            const S* xc = x + ((long)n * Ci + ci) * H * W;
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    S* row = cols + ((long)(ci * kh + ky) * kw + kx) * X + (long)n * Ho * Wo;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        S* dst = row + (long)oy * Wo;
                        if (iy < 0 || iy >= H) {
                            for (int ox = 0; ox < Wo; ++ox) dst[ox] = 0;
                            continue;
                        }
                        const S* src = xc + (long)iy * W;
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
                        }
                    }
                }
        }
}

template <typename S>
void col2im_add(const S* cols, int N, int Ci, int H, int W, int kh, int kw, int Ho, int Wo, int stride, int pad,
                S* gx) {
    const long X = (long)N * Ho * Wo;
    for (int n = 0; n < N; ++n)
        for (int ci = 0; ci < Ci; ++ci) {
            S* xc = gx + ((long)n * Ci + ci) * H * W;
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    const S* row = cols + ((long)(ci * kh + ky) * kw + kx) * X + (long)n * Ho * Wo;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        S* dst = xc + (long)iy * W;
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < W) dst[ix] += row[(long)oy * Wo + ox];
                        }
                    }
                }
        }
}
}  // namespace detail

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride = 1, int pad = 0) {
    require(x.rank() == 4 && w.rank() == 4, "conv2d: x and w must be rank 4");
    require(x.dim(1) == w.dim(1),
            detail::str("conv2d: channel mismatch x=", shape_str(x.shape()), " w=", shape_str(w.shape())));
    require(b.numel() == w.dim(0), "conv2d: bias size mismatch");
    require(stride >= 1, "conv2d: stride must be >= 1");
    const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    require(Ho >= 1 && Wo >= 1, detail::str("conv2d: kernel ", kh, "x", kw, " too large for input ", shape_str(x.shape())));

    const long K = (long)Ci * kh * kw;
    const long X = (long)N * Ho * Wo;
    auto cols = std::make_shared<std::vector<S>>(K * X);
    detail::im2col(x.data(), N, Ci, H, W, kh, kw, Ho, Wo, stride, pad, cols->data());

    // out_mat [Co, X] = w_flat [Co, K] * cols [K, X], then bias
    std::vector<S> out_mat((long)Co * X, S(0));
    detail::gemm_acc(w.data(), cols->data(), out_mat.data(), Co, K, X);

    Tensor<S> out(Shape{N, Co, Ho, Wo});
    S* po = out.data();
    const S* pb = b.data();
    const long hw = (long)Ho * Wo;
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
            const S* src = out_mat.data() + (long)co * X + (long)n * hw;
            S* dst = po + ((long)n * Co + co) * hw;
            const S bias = pb[co];
            for (long i = 0; i < hw; ++i) dst[i] = src[i] + bias;
        }
    detail::check_finite(out, "conv2d");

    if (detail::tracking(x, w, b)) {
        Tensor<S> xc = x, wc = w, bc = b, oc = out;
        detail::record(out, [xc, wc, bc, oc, cols, N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad, K, X]() mutable {
            if (!oc.has_grad()) return;
            const long hw = (long)Ho * Wo;
            // regroup the output grad as [Co, X]
            std::vector<S> go_mat((long)Co * X);
            const S* go = oc.grad().data();
            for (int n = 0; n < N; ++n)
                for (int co = 0; co < Co; ++co)
                    std::copy(go + ((long)n * Co + co) * hw, go + ((long)n * Co + co + 1) * hw,
                              go_mat.data() + (long)co * X + (long)n * hw);
            if (wc.tracked()) {
                // dW [Co, K] = go_mat [Co, X] * cols^T
                detail::gemm_a_bt(go_mat.data(), cols->data(), wc.grad().data(), Co, X, K);
            }
            if (bc.tracked()) {
                S* gb = bc.grad().data();
                for (int co = 0; co < Co; ++co) {
                    const S* row = go_mat.data() + (long)co * X;
                    S acc = 0;
                    for (long i = 0; i < X; ++i) acc += row[i];
                    gb[co] += acc;
                }
            }
            if (xc.tracked()) {
                // dcols [K, X] = w_flat^T * go_mat, then col2im
                std::vector<S> dcols(K * X, S(0));
                detail::gemm_at_b(wc.data(), go_mat.data(), dcols.data(), Co, K, X);
                detail::col2im_add(dcols.data(), N, Ci, H, W, kh, kw, Ho, Wo, stride, pad, xc.grad().data());
            }
        });
    }
    return out;
}

// group normalization over [N,C,...]; gamma/beta are per-channel
template <typename S>
Tensor<S> group_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, int groups,
                     S eps = S(1e-5)) {
    require(x.rank() >= 2, "group_norm: x must have rank >= 2");
    const int N = x.dim(0), C = x.dim(1);
    require(C % groups == 0, detail::str("group_norm: channels ", C, " not divisible by groups ", groups));
    require(gamma.numel() == C && beta.numel() == C, "group_norm: gamma/beta must be per-channel");
    const long M = x.numel() / ((long)N * C);  // spatial size
    const int cg = C / groups;
    const long gsize = (long)cg * M;

    Tensor<S> out(x.shape());
    std::vector<S> mu((long)N * groups), inv_sd((long)N * groups);
    const S* px = x.data();
    const S* pg = gamma.data();
    const S* pbeta = beta.data();
    S* po = out.data();
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g) {
            const S* base = px + ((long)n * C + (long)g * cg) * M;
            S m = 0;
            for (long i = 0; i < gsize; ++i) m += base[i];
            m /= S(gsize);
            S var = 0;
            for (long i = 0; i < gsize; ++i) {
                const S d = base[i] - m;
                var += d * d;
            }
            var /= S(gsize);
            const S is = S(1) / std::sqrt(var + eps);
            mu[(long)n * groups + g] = m;
            inv_sd[(long)n * groups + g] = is;
            S* obase = po + ((long)n * C + (long)g * cg) * M;
            for (int c = 0; c < cg; ++c) {
                const S gm = pg[g * cg + c], bt = pbeta[g * cg + c];
                for (long i = 0; i < M; ++i)
                    obase[c * M + i] = (base[c * M + i] - m) * is * gm + bt;
            }
        }
    detail::check_finite(out, "group_norm");

    if (detail::tracking(x, gamma, beta)) {
        Tensor<S> xc = x, gc = gamma, bc = beta, oc = out;
        detail::record(out, [xc, gc, bc, oc, N, C, groups, cg, M, gsize, mu, inv_sd]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            const S* px = xc.data();
            const S* pg = gc.data();
            for (int n = 0; n < N; ++n)
                for (int g = 0; g < groups; ++g) {
                    const long base_off = ((long)n * C + (long)g * cg) * M;
                    const S m = mu[(long)n * groups + g];
                    const S is = inv_sd[(long)n * groups + g];
                    // dL/dxhat, plus the two means needed for dL/dx
                    S sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (int c = 0; c < cg; ++c) {
                        const S gm = pg[g * cg + c];
                        for (long i = 0; i < M; ++i) {
                            const long k = base_off + c * M + i;
                            const S xhat = (px[k] - m) * is;
                            const S dxhat = go[k] * gm;
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                        }
                    }
                    if (xc.tracked()) {
                        S* gx = xc.grad().data();
                        const S inv_n = S(1) / S(gsize);
                        for (int c = 0; c < cg; ++c) {
                            const S gm = pg[g * cg + c];
                            for (long i = 0; i < M; ++i) {
                                const long k = base_off + c * M + i;
                                const S xhat = (px[k] - m) * is;
                                const S dxhat = go[k] * gm;
                                gx[k] += is * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
                            }
                        }
                    }
                    if (gc.tracked() || bc.tracked()) {
                        for (int c = 0; c < cg; ++c) {
                            S dgm = 0, dbt = 0;
                            for (long i = 0; i < M; ++i) {
                                const long k = base_off + c * M + i;
                                dgm += go[k] * (px[k] - m) * is;
                                dbt += go[k];
                            }
                            if (gc.tracked()) gc.grad()[g * cg + c] += dgm;
                            if (bc.tracked()) bc.grad()[g * cg + c] += dbt;
                        }
                    }
                }
        });
    }
    return out;
}

// softmax over the last axis
template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
    require(x.rank() >= 1, "softmax: rank must be >= 1");
    const long L = x.dim(x.rank() - 1);
    const long rows = x.numel() / L;
    Tensor<S> out(x.shape());
    const S* px = x.data();
    S* po = out.data();
    for (long r = 0; r < rows; ++r) {
        const S* xr = px + r * L;
        S* orow = po + r * L;
        S mx = xr[0];
        for (long i = 1; i < L; ++i) mx = std::max(mx, xr[i]);
        S z = 0;
        for (long i = 0; i < L; ++i) {
            orow[i] = std::exp(xr[i] - mx);
            z += orow[i];
        }
        const S inv = S(1) / z;
        for (long i = 0; i < L; ++i) orow[i] *= inv;
    }
    detail::check_finite(out, "softmax");
    if (detail::tracking(x)) {
        Tensor<S> xc = x, oc = out;
        detail::record(out, [xc, oc, rows, L]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            const S* po = oc.data();
            S* gx = xc.grad().data();
            for (long r = 0; r < rows; ++r) {
                const S* y = po + r * L;
                const S* gy = go + r * L;
                S dot = 0;
                for (long i = 0; i < L; ++i) dot += gy[i] * y[i];
                S* gxr = gx + r * L;
                for (long i = 0; i < L; ++i) gxr[i] += y[i] * (gy[i] - dot);
            }
        });
    }
    return out;
}

// scaled dot-product attention: q [B,Nq,D], k [B,Nk,D], v [B,Nk,Dv]
// Composite of bmm/softmax, so gradients come from the primitives.
template <typename S>
Tensor<S> scaled_dot_product_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v) {
    require(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, "attention: inputs must be rank 3");
    require(q.dim(0) == k.dim(0) && k.dim(0) == v.dim(0) && q.dim(2) == k.dim(2) && k.dim(1) == v.dim(1),
            detail::str("attention: incompatible shapes q=", shape_str(q.shape()), " k=", shape_str(k.shape()),
                        " v=", shape_str(v.shape())));
    const S inv_sqrt_d = S(1) / std::sqrt(S(q.dim(2)));
    Tensor<S> scores = scale(bmm(q, permute(k, {0, 2, 1})), inv_sqrt_d);
    return bmm(softmax(scores), v);
}

// sinusoidal embedding of a list of positions -> [N, dim]; positions are
// treated as constants (no gradient path into them)
template <typename S>
Tensor<S> sinusoidal_embedding(const std::vector<S>& positions, int dim) {
    require(dim >= 2 && dim % 2 == 0, "sinusoidal_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    Tensor<S> out(Shape{(int)positions.size(), dim});
    S* po = out.data();
    for (size_t n = 0; n < positions.size(); ++n) {
        for (int i = 0; i < half; ++i) {
            const S freq = std::exp(S(-std::log(10000.0)) * S(i) / S(half));
            po[n * dim + i] = std::sin(positions[n] * freq);
            po[n * dim + half + i] = std::cos(positions[n] * freq);
        }
    }
    detail::check_finite(out, "sinusoidal_embedding");
    return out;
}

// nearest-neighbor 2x upsample of [N,C,H,W]
template <typename S>
Tensor<S> nearest_upsample(const Tensor<S>& x) {
    require(x.rank() == 4, "nearest_upsample: x must be rank 4");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<S> out(Shape{N, C, H * 2, W * 2});
    const S* px = x.data();
    S* po = out.data();
    const long planes = (long)N * C;
    for (long p = 0; p < planes; ++p) {
        const S* src = px + p * H * W;
        S* dst = po + p * H * W * 4;
        for (int y = 0; y < 2 * H; ++y)
            for (int x2 = 0; x2 < 2 * W; ++x2) dst[(long)y * 2 * W + x2] = src[(long)(y / 2) * W + x2 / 2];
    }
    if (detail::tracking(x)) {
        Tensor<S> xc = x, oc = out;
        detail::record(out, [xc, oc, planes, H, W]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            S* gx = xc.grad().data();
            for (long p = 0; p < planes; ++p) {
                const S* src = go + p * H * W * 4;
                S* dst = gx + p * H * W;
                for (int y = 0; y < 2 * H; ++y)
                    for (int x2 = 0; x2 < 2 * W; ++x2) dst[(long)(y / 2) * W + x2 / 2] += src[(long)y * 2 * W + x2];
            }
        });
    }
    return out;
}

// 2x2 average-pool downsample of [N,C,H,W]; H and W must be even
template <typename S>
Tensor<S> avg_downsample(const Tensor<S>& x) {
    require(x.rank() == 4, "avg_downsample: x must be rank 4");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(H % 2 == 0 && W % 2 == 0, detail::str("avg_downsample: odd spatial size ", shape_str(x.shape())));
    Tensor<S> out(Shape{N, C, H / 2, W / 2});
    const S* px = x.data();
    S* po = out.data();
    const long planes = (long)N * C;
    for (long p = 0; p < planes; ++p) {
        const S* src = px + p * H * W;
        S* dst = po + p * (H / 2) * (W / 2);
        for (int y = 0; y < H / 2; ++y)
            for (int x2 = 0; x2 < W / 2; ++x2)
                dst[(long)y * (W / 2) + x2] = S(0.25) * (src[(long)(2 * y) * W + 2 * x2] + src[(long)(2 * y) * W + 2 * x2 + 1] +
                                                         src[(long)(2 * y + 1) * W + 2 * x2] + src[(long)(2 * y + 1) * W + 2 * x2 + 1]);
    }
    if (detail::tracking(x)) {
        Tensor<S> xc = x, oc = out;
        detail::record(out, [xc, oc, planes, H, W]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            S* gx = xc.grad().data();
            for (long p = 0; p < planes; ++p) {
                const S* src = go + p * (H / 2) * (W / 2);
                S* dst = gx + p * H * W;
                for (int y = 0; y < H; ++y)
                    for (int x2 = 0; x2 < W; ++x2) dst[(long)y * W + x2] += S(0.25) * src[(long)(y / 2) * (W / 2) + x2 / 2];
            }
        });
    }
    return out;
}

// Bilinear read of a feature map [C,H,W] at continuous texel coordinates
// (x=column, y=row, texel centers at integers). Samples outside
// [0,W-1]x[0,H-1] produce a zero row. Coordinates are constants; gradients
// flow into the map only.
template <typename S>
Tensor<S> bilinear_gather(const Tensor<S>& map, const std::vector<S>& xs, const std::vector<S>& ys) {
    require(map.rank() == 3, "bilinear_gather: map must be [C,H,W]");
    require(xs.size() == ys.size(), "bilinear_gather: coordinate list size mismatch");
    const int C = map.dim(0), H = map.dim(1), W = map.dim(2);
    const long n = (long)xs.size();
    Tensor<S> out(Shape{(int)n, C});

    struct Tap {
        long idx00, idx01, idx10, idx11;
        S w00, w01, w10, w11;
        bool inside;
    };
    std::vector<Tap> taps(n);
    for (long i = 0; i < n; ++i) {
        const S x = xs[i], y = ys[i];
        Tap t{};
        t.inside = (x >= S(0) && x <= S(W - 1) && y >= S(0) && y <= S(H - 1));
        if (t.inside) {
            int x0 = (int)std::floor((double)x), y0 = (int)std::floor((double)y);
            x0 = std::min(x0, W - 2 >= 0 ? W - 2 : 0);
            y0 = std::min(y0, H - 2 >= 0 ? H - 2 : 0);
            const S fx = x - S(x0), fy = y - S(y0);
            const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
            t.idx00 = (long)y0 * W + x0;
            t.idx01 = (long)y0 * W + x1;
            t.idx10 = (long)y1 * W + x0;
            t.idx11 = (long)y1 * W + x1;
            t.w00 = (S(1) - fx) * (S(1) - fy);
            t.w01 = fx * (S(1) - fy);
            t.w10 = (S(1) - fx) * fy;
            t.w11 = fx * fy;
        }
        taps[i] = t;
    }

    const S* pm = map.data();
    S* po = out.data();
    const long plane = (long)H * W;
    for (long i = 0; i < n; ++i) {
        const Tap& t = taps[i];
        S* orow = po + i * C;
        if (!t.inside) continue;  // already zero
        for (int c = 0; c < C; ++c) {
            const S* mp = pm + (long)c * plane;
            orow[c] = t.w00 * mp[t.idx00] + t.w01 * mp[t.idx01] + t.w10 * mp[t.idx10] + t.w11 * mp[t.idx11];
        }
    }
    detail::check_finite(out, "bilinear_gather");

    if (detail::tracking(map)) {
        Tensor<S> mc = map, oc = out;
        detail::record(out, [mc, oc, taps, n, C, plane]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            S* gm = mc.grad().data();
#pragma omp parallel for schedule(static) if (C > 1)
            for (int c = 0; c < C; ++c) {
                S* gp = gm + (long)c * plane;
                for (long i = 0; i < n; ++i) {
                    const Tap& t = taps[i];
                    if (!t.inside) continue;
                    const S g = go[i * C + c];
                    gp[t.idx00] += g * t.w00;
                    gp[t.idx01] += g * t.w01;
                    gp[t.idx10] += g * t.w10;
                    gp[t.idx11] += g * t.w11;
                }
            }
        });
    }
    return out;
}

// Scatters src rows into a [total, C] tensor at the given row indices; other
// rows are zero. Backward gathers the gradient rows back.
template <typename S>
Tensor<S> scatter_rows(const Tensor<S>& src, const std::vector<int>& rows, int total) {
    require(src.rank() == 2, "scatter_rows: src must be [M,C]");
    require((int)rows.size() == src.dim(0), "scatter_rows: one target row per source row");
    const int M = src.dim(0), C = src.dim(1);
    Tensor<S> out(Shape{total, C});
    const S* ps = src.data();
    S* po = out.data();
    for (int i = 0; i < M; ++i) {
        require(rows[i] >= 0 && rows[i] < total, "scatter_rows: row index out of range");
        std::copy(ps + (long)i * C, ps + (long)(i + 1) * C, po + (long)rows[i] * C);
    }
    if (detail::tracking(src)) {
        Tensor<S> sc = src, oc = out;
        detail::record(out, [sc, oc, rows, M, C]() mutable {
            if (!oc.has_grad()) return;
            const S* go = oc.grad().data();
            S* gs = sc.grad().data();
            for (int i = 0; i < M; ++i)
                for (int c = 0; c < C; ++c) gs[(long)i * C + c] += go[(long)rows[i] * C + c];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// volume rendering quadrature (custom fused op; see tests for the FD check)
// ---------------------------------------------------------------------------

template <typename S>
struct RenderedRays {
    Tensor<S> rgb;    // [R,3]
    Tensor<S> alpha;  // [R]
    Tensor<S> depth;  // [R]
};

// sigma [R,K] >= 0, color [R,K,3]; delta/tmid are per-sample constants.
// w_i = T_i (1 - exp(-sigma_i delta_i)), T_i = exp(-sum_{j<i} sigma_j delta_j)
template <typename S>
RenderedRays<S> volume_render(const Tensor<S>& sigma, const Tensor<S>& color, const std::vector<S>& delta,
                              const std::vector<S>& tmid) {
    require(sigma.rank() == 2 && color.rank() == 3, "volume_render: sigma [R,K], color [R,K,3]");
    const int R = sigma.dim(0), K = sigma.dim(1);
    require(color.dim(0) == R && color.dim(1) == K && color.dim(2) == 3,
            detail::str("volume_render: color shape ", shape_str(color.shape()), " does not match sigma ",
                        shape_str(sigma.shape())));
    require((long)delta.size() == (long)R * K && (long)tmid.size() == (long)R * K,
            "volume_render: delta/tmid size mismatch");

    RenderedRays<S> out{Tensor<S>(Shape{R, 3}), Tensor<S>(Shape{R}), Tensor<S>(Shape{R})};
    const S* ps = sigma.data();
    const S* pc = color.data();
    S* prgb = out.rgb.data();
    S* pa = out.alpha.data();
    S* pd = out.depth.data();
#pragma omp parallel for schedule(static) if (R > 64)
    for (int r = 0; r < R; ++r) {
        S trans = 1;
        S rgb[3] = {0, 0, 0}, alpha = 0, depth = 0;
        for (int i = 0; i < K; ++i) {
            const long k = (long)r * K + i;
            const S a = S(1) - std::exp(-ps[k] * delta[k]);
            const S w = trans * a;
            rgb[0] += w * pc[k * 3 + 0];
            rgb[1] += w * pc[k * 3 + 1];
            rgb[2] += w * pc[k * 3 + 2];
            alpha += w;
            depth += w * tmid[k];
            trans *= S(1) - a;
        }
        prgb[r * 3 + 0] = rgb[0];
        prgb[r * 3 + 1] = rgb[1];
        prgb[r * 3 + 2] = rgb[2];
        pa[r] = alpha;
        pd[r] = depth;
    }
    detail::check_finite(out.rgb, "volume_render");

    if (detail::tracking(sigma, color)) {
        Tensor<S> sc = sigma, cc = color;
        Tensor<S> orgb = out.rgb, oalpha = out.alpha, odepth = out.depth;
        auto bw = [sc, cc, orgb, oalpha, odepth, delta, tmid, R, K]() mutable {
            const bool has_rgb = orgb.has_grad(), has_a = oalpha.has_grad(), has_d = odepth.has_grad();
            if (!has_rgb && !has_a && !has_d) return;
            const S* ps = sc.data();
            const S* pc = cc.data();
            const S* grgb = has_rgb ? orgb.grad().data() : nullptr;
            const S* ga = has_a ? oalpha.grad().data() : nullptr;
            const S* gd = has_d ? odepth.grad().data() : nullptr;
            S* gsig = sc.tracked() ? sc.grad().data() : nullptr;
            S* gcol = cc.tracked() ? cc.grad().data() : nullptr;
#pragma omp parallel for schedule(static) if (R > 64)
            for (int r = 0; r < R; ++r) {
                // forward pass recomputes w_i and T_{i+1}, then a reverse suffix
                // scan handles the dependence of downstream weights on sigma_i.
                std::vector<S> w(K), G(K), trans_after(K);
                S trans = 1;
                for (int i = 0; i < K; ++i) {
                    const long k = (long)r * K + i;
                    const S a = S(1) - std::exp(-ps[k] * delta[k]);
                    w[i] = trans * a;
                    trans *= S(1) - a;
                    trans_after[i] = trans;  // T_{i+1}
                    S g = 0;
                    if (has_rgb)
                        g += grgb[r * 3 + 0] * pc[k * 3 + 0] + grgb[r * 3 + 1] * pc[k * 3 + 1] +
                             grgb[r * 3 + 2] * pc[k * 3 + 2];
                    if (has_a) g += ga[r];
                    if (has_d) g += gd[r] * tmid[k];
                    G[i] = g;
                    if (gcol && has_rgb) {
                        gcol[k * 3 + 0] += w[i] * grgb[r * 3 + 0];
                        gcol[k * 3 + 1] += w[i] * grgb[r * 3 + 1];
                        gcol[k * 3 + 2] += w[i] * grgb[r * 3 + 2];
                    }
                }
                if (gsig) {
                    // d w_i / d sigma_i = delta_i * T_{i+1}; d w_j / d sigma_i = -delta_i w_j (j>i)
                    S suffix = 0;  // sum_{j>i} w_j G_j
                    for (int i = K - 1; i >= 0; --i) {
                        const long k = (long)r * K + i;
                        gsig[k] += delta[k] * (trans_after[i] * G[i] - suffix);
                        suffix += w[i] * G[i];
                    }
                }
            }
        };
        out.rgb.mark_on_tape();
        out.alpha.mark_on_tape();
        out.depth.mark_on_tape();
        active_tape<S>()->record(bw);
    }
    return out;
}

}  // namespace gas
