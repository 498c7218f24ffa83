#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "penguin/errors.hpp"

namespace penguin {

template <typename Real>
class Tape;

using Shape = std::vector<long>;

inline long shape_numel(const Shape& s) {
    long n = 1;
    for (long e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Boolean mask, row-major. shape may equal the operand shape or a trailing
// suffix of it (the mask is then reused for every leading index).
struct Mask {
    Shape shape;
    std::vector<std::uint8_t> allowed;

    long numel() const { return shape_numel(shape); }
};

// ---------------------------------------------------------------------------
// Grad-mode guard. One flag per thread; matches the one-tape-per-thread model.
// ---------------------------------------------------------------------------

inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}

inline bool grad_enabled() { return grad_enabled_flag(); }

class NoGradGuard {
  public:
    NoGradGuard() : prev_(grad_enabled_flag()) { grad_enabled_flag() = false; }
    ~NoGradGuard() { grad_enabled_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// ---------------------------------------------------------------------------
// Tensor: dense row-major values + optional gradient accumulator.
// ---------------------------------------------------------------------------

template <typename Real>
struct TensorNode {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until first accumulation
    bool requires_grad = false;
    Tape<Real>* tape = nullptr;
};

template <typename Real>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        Tensor t;
        t.node_ = std::make_shared<TensorNode<Real>>();
        t.node_->value.assign(static_cast<std::size_t>(shape_numel(shape)), Real(0));
        t.node_->shape = std::move(shape);
        return t;
    }

    static Tensor full(Shape shape, Real v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.node_->value.begin(), t.node_->value.end(), v);
        return t;
    }

    static Tensor from(Shape shape, std::vector<Real> data) {
        if (shape_numel(shape) != static_cast<long>(data.size()))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<TensorNode<Real>>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(data);
        return t;
    }

    static Tensor scalar(Real v) { return from({1}, {v}); }

    // Trainable leaf bound to a tape.
    static Tensor leaf(Shape shape, std::vector<Real> data, Tape<Real>& tape) {
        Tensor t = from(std::move(shape), std::move(data));
        t.node_->requires_grad = true;
        t.node_->tape = &tape;
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    long dim() const { return static_cast<long>(node_->shape.size()); }
    long numel() const { return static_cast<long>(node_->value.size()); }
    long extent(long i) const {
        long d = dim();
        return node_->shape[static_cast<std::size_t>(i < 0 ? d + i : i)];
    }

    std::vector<Real>& values() { return node_->value; }
    const std::vector<Real>& values() const { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    Tape<Real>* tape() const { return node_->tape; }

    bool grad_allocated() const { return !node_->grad.empty(); }

    // Gradient accumulator, zero-initialized on first access.
    std::vector<Real>& grad() {
        if (node_->grad.empty()) node_->grad.assign(node_->value.size(), Real(0));
        return node_->grad;
    }
    const std::vector<Real>& grad() const {
        return const_cast<Tensor*>(this)->grad();
    }

    void zero_grad() { node_->grad.assign(node_->value.size(), Real(0)); }

    Real item() const {
        if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    std::shared_ptr<TensorNode<Real>> node_;
};

// ---------------------------------------------------------------------------
// Tape: ordered record of primitive ops. Append order is topological: every
// entry is recorded after its inputs were produced, so reverse replay is a
// valid backward pass.
// ---------------------------------------------------------------------------

template <typename Real>
class Tape {
  public:
    void record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    void clear() { entries_.clear(); }

    void replay_backward() {
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    }

  private:
    std::vector<std::function<void()>> entries_;
};

// Runs reverse-mode accumulation from a scalar loss, then clears the tape.
template <typename Real>
void backward(const Tensor<Real>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw NumericError("backward requires a scalar loss");
    Tape<Real>* tape = loss.tape();
    if (tape == nullptr || tape->empty())
        throw NumericError("backward on a loss with an empty tape");
    loss.node_->grad.assign(1, Real(1));
    tape->replay_backward();
    tape->clear();
}

// ---------------------------------------------------------------------------
// Op plumbing
// ---------------------------------------------------------------------------

namespace detail {

template <typename Real>
Tape<Real>* merge_tapes(std::initializer_list<const Tensor<Real>*> ts) {
    Tape<Real>* tape = nullptr;
    for (const Tensor<Real>* t : ts) {
        if (!t->defined() || t->tape() == nullptr) continue;
        if (tape == nullptr)
            tape = t->tape();
        else if (tape != t->tape())
            throw NumericError("operands recorded on different tapes");
    }
    return tape;
}

template <typename Real>
bool track(std::initializer_list<const Tensor<Real>*> ts) {
    if (!grad_enabled()) return false;
    for (const Tensor<Real>* t : ts)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

template <typename Real>
void mark_output(Tensor<Real>& out, bool tracked, Tape<Real>* tape) {
    if (tracked) {
        out.node_->requires_grad = true;
        out.node_->tape = tape;
    }
}

// += src into dst grad (allocating), both length n
template <typename Real>
void accumulate(Tensor<Real>& t, const std::vector<Real>& delta) {
    auto& g = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul: [m,k]x[k,n] -> [m,n]; leading dims of the left operand are treated
// as a batch when the right operand is 2-D; both operands may carry identical
// leading dims (per-batch product). Gradients: dA = dC*B^T, dB = A^T*dC,
// summed over the batch when B is shared.
// ---------------------------------------------------------------------------

namespace detail {

// C[m,n] += A[m,k] * B[k,n], row-major, i-k-j order
template <typename Real>
void mm_accum(const Real* a, const Real* b, Real* c, long m, long k, long n) {
    for (long i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        Real* crow = c + i * n;
        for (long p = 0; p < k; ++p) {
            const Real av = arow[p];
            if (av == Real(0)) continue;
            const Real* brow = b + p * n;
            for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA[m,k] += dC[m,n] * B^T  (dot of rows)
template <typename Real>
void mm_grad_a(const Real* dc, const Real* b, Real* da, long m, long k, long n) {
    for (long i = 0; i < m; ++i) {
        const Real* dcrow = dc + i * n;
        Real* darow = da + i * k;
        for (long p = 0; p < k; ++p) {
            const Real* brow = b + p * n;
            Real acc = 0;
            for (long j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
            darow[p] += acc;
        }
    }
}

// dB[k,n] += A^T * dC  (axpy over rows of dC)
template <typename Real>
void mm_grad_b(const Real* a, const Real* dc, Real* db, long m, long k, long n) {
    for (long i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        const Real* dcrow = dc + i * n;
        for (long p = 0; p < k; ++p) {
            const Real av = arow[p];
            if (av == Real(0)) continue;
            Real* dbrow = db + p * n;
            for (long j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
        }
    }
}

}  // namespace detail

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.dim() < 2 || b.dim() < 2)
        throw ShapeError("matmul needs >=2-D operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const long m = a.extent(-2), k = a.extent(-1);
    const long kb = b.extent(-2), n = b.extent(-1);
    const bool batched_b = b.dim() > 2;
    if (k != kb)
        throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Shape lead(a.shape().begin(), a.shape().end() - 2);
    if (batched_b) {
        Shape lead_b(b.shape().begin(), b.shape().end() - 2);
        if (lead != lead_b)
            throw ShapeError("matmul batch extents differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const long batch = shape_numel(lead);

    Shape out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<Real> out = Tensor<Real>::zeros(out_shape);

    const Real* av = a.values().data();
    const Real* bv = b.values().data();
    Real* cv = out.values().data();
    for (long t = 0; t < batch; ++t)
        detail::mm_accum(av + t * m * k, batched_b ? bv + t * k * n : bv, cv + t * m * n, m, k, n);

    const bool tracked = detail::track<Real>({&a, &b});
    Tape<Real>* tape = detail::merge_tapes<Real>({&a, &b});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([an = a.node_, bn = b.node_, on = out.node_, m, k, n, batch, batched_b]() {
            if (on->grad.empty()) return;
            const Real* dc = on->grad.data();
            if (an->requires_grad) {
                if (an->grad.empty()) an->grad.assign(an->value.size(), Real(0));
                for (long t = 0; t < batch; ++t)
                    detail::mm_grad_a(dc + t * m * n,
                                      batched_b ? bn->value.data() + t * k * n : bn->value.data(),
                                      an->grad.data() + t * m * k, m, k, n);
            }
            if (bn->requires_grad) {
                if (bn->grad.empty()) bn->grad.assign(bn->value.size(), Real(0));
                for (long t = 0; t < batch; ++t)
                    detail::mm_grad_b(an->value.data() + t * m * k, dc + t * m * n,
                                      batched_b ? bn->grad.data() + t * k * n : bn->grad.data(), m,
                                      k, n);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax over the last dimension, max-subtraction stabilized. An optional
// boolean mask (same shape or trailing suffix) forces excluded positions to
// exactly zero; a fully masked row is an error.
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> softmax_lastdim(const Tensor<Real>& x, const Mask* mask = nullptr) {
    if (x.dim() < 1 || x.extent(-1) < 1)
        throw ShapeError("softmax_lastdim on " + shape_str(x.shape()));
    const long n = x.extent(-1);
    const long rows = x.numel() / n;
    long mask_len = 0;
    if (mask != nullptr) {
        mask_len = mask->numel();
        const long xn = x.numel();
        if (mask_len == 0 || xn % mask_len != 0 || mask_len % n != 0)
            throw ShapeError("softmax mask shape " + shape_str(mask->shape) +
                             " does not tile operand " + shape_str(x.shape()));
    }

    Tensor<Real> out = Tensor<Real>::zeros(x.shape());
    const Real* xv = x.values().data();
    Real* ov = out.values().data();
    for (long r = 0; r < rows; ++r) {
        const Real* row = xv + r * n;
        Real* orow = ov + r * n;
        const std::uint8_t* mrow = nullptr;
        if (mask != nullptr) mrow = mask->allowed.data() + (r * n) % mask_len;

        Real mx = -std::numeric_limits<Real>::infinity();
        long live = 0;
        for (long j = 0; j < n; ++j) {
            if (mrow != nullptr && mrow[j] == 0) continue;
            ++live;
            mx = std::max(mx, row[j]);
        }
        if (live == 0) throw NumericError("softmax: fully masked row");
        Real sum = 0;
        for (long j = 0; j < n; ++j) {
            if (mrow != nullptr && mrow[j] == 0) {
                orow[j] = Real(0);
                continue;
            }
            const Real e = std::exp(row[j] - mx);
            orow[j] = e;
            sum += e;
        }
        const Real inv = Real(1) / sum;
        for (long j = 0; j < n; ++j) orow[j] *= inv;
    }

    const bool tracked = detail::track<Real>({&x});
    Tape<Real>* tape = detail::merge_tapes<Real>({&x});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([xn = x.node_, on = out.node_, n, rows]() {
            if (on->grad.empty() || !xn->requires_grad) return;
            if (xn->grad.empty()) xn->grad.assign(xn->value.size(), Real(0));
            const Real* w = on->value.data();
            const Real* g = on->grad.data();
            Real* dx = xn->grad.data();
            for (long r = 0; r < rows; ++r) {
                const Real* wr = w + r * n;
                const Real* gr = g + r * n;
                Real dot = 0;
                for (long j = 0; j < n; ++j) dot += wr[j] * gr[j];
                Real* dr = dx + r * n;
                for (long j = 0; j < n; ++j) dr[j] += wr[j] * (gr[j] - dot);
            }
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> softmax_lastdim(const Tensor<Real>& x, const Mask& mask) {
    return softmax_lastdim(x, &mask);
}

// ---------------------------------------------------------------------------
// Elementwise suite. Shapes must match exactly, or one operand is a scalar
// (numel 1); no other broadcasting.
// ---------------------------------------------------------------------------

namespace detail {

enum class BinOp { Add, Sub, Mul };

template <typename Real>
Tensor<Real> binary(const Tensor<Real>& a, const Tensor<Real>& b, BinOp op) {
    const bool a_scalar = a.numel() == 1 && b.numel() != 1;
    const bool b_scalar = b.numel() == 1 && a.numel() != 1;
    if (!a_scalar && !b_scalar && !same_shape(a.shape(), b.shape()))
        throw ShapeError("elementwise op on mismatched shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));

    const Tensor<Real>& big = a_scalar ? b : a;
    Tensor<Real> out = Tensor<Real>::zeros(big.shape());
    const long nel = big.numel();
    const Real* av = a.values().data();
    const Real* bv = b.values().data();
    Real* ov = out.values().data();
    for (long i = 0; i < nel; ++i) {
        const Real x = a_scalar ? av[0] : av[i];
        const Real y = b_scalar ? bv[0] : bv[i];
        switch (op) {
            case BinOp::Add: ov[i] = x + y; break;
            case BinOp::Sub: ov[i] = x - y; break;
            case BinOp::Mul: ov[i] = x * y; break;
        }
    }

    const bool tracked = track<Real>({&a, &b});
    Tape<Real>* tape = merge_tapes<Real>({&a, &b});
    mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([an = a.node_, bn = b.node_, on = out.node_, op, a_scalar, b_scalar, nel]() {
            if (on->grad.empty()) return;
            const Real* g = on->grad.data();
            if (an->requires_grad) {
                if (an->grad.empty()) an->grad.assign(an->value.size(), Real(0));
                Real* da = an->grad.data();
                for (long i = 0; i < nel; ++i) {
                    Real gi = g[i];
                    if (op == BinOp::Mul) gi *= b_scalar ? bn->value[0] : bn->value[i];
                    da[a_scalar ? 0 : i] += gi;
                }
            }
            if (bn->requires_grad) {
                if (bn->grad.empty()) bn->grad.assign(bn->value.size(), Real(0));
                Real* db = bn->grad.data();
                for (long i = 0; i < nel; ++i) {
                    Real gi = g[i];
                    if (op == BinOp::Sub) gi = -gi;
                    if (op == BinOp::Mul) gi = g[i] * (a_scalar ? an->value[0] : an->value[i]);
                    db[b_scalar ? 0 : i] += gi;
                }
            }
        });
    }
    return out;
}

}  // namespace detail

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    return detail::binary(a, b, detail::BinOp::Add);
}
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
    return detail::binary(a, b, detail::BinOp::Sub);
}
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
    return detail::binary(a, b, detail::BinOp::Mul);
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
    Tensor<Real> out = Tensor<Real>::zeros(x.shape());
    const long nel = x.numel();
    const Real* xv = x.values().data();
    Real* ov = out.values().data();
    for (long i = 0; i < nel; ++i) ov[i] = xv[i] > Real(0) ? xv[i] : Real(0);

    const bool tracked = detail::track<Real>({&x});
    Tape<Real>* tape = detail::merge_tapes<Real>({&x});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([xn = x.node_, on = out.node_, nel]() {
            if (on->grad.empty() || !xn->requires_grad) return;
            if (xn->grad.empty()) xn->grad.assign(xn->value.size(), Real(0));
            for (long i = 0; i < nel; ++i)
                if (xn->value[i] > Real(0)) xn->grad[i] += on->grad[i];
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real c) {
    Tensor<Real> out = Tensor<Real>::zeros(x.shape());
    const long nel = x.numel();
    for (long i = 0; i < nel; ++i) out.values()[i] = x.values()[i] * c;

    const bool tracked = detail::track<Real>({&x});
    Tape<Real>* tape = detail::merge_tapes<Real>({&x});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([xn = x.node_, on = out.node_, c, nel]() {
            if (on->grad.empty() || !xn->requires_grad) return;
            if (xn->grad.empty()) xn->grad.assign(xn->value.size(), Real(0));
            for (long i = 0; i < nel; ++i) xn->grad[i] += on->grad[i] * c;
        });
    }
    return out;
}

// mean over all elements -> scalar
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
    const long nel = x.numel();
    if (nel == 0) throw ShapeError("mean of empty tensor");
    Real acc = 0;
    for (long i = 0; i < nel; ++i) acc += x.values()[i];
    Tensor<Real> out = Tensor<Real>::scalar(acc / static_cast<Real>(nel));

    const bool tracked = detail::track<Real>({&x});
    Tape<Real>* tape = detail::merge_tapes<Real>({&x});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([xn = x.node_, on = out.node_, nel]() {
            if (on->grad.empty() || !xn->requires_grad) return;
            if (xn->grad.empty()) xn->grad.assign(xn->value.size(), Real(0));
            const Real g = on->grad[0] / static_cast<Real>(nel);
            for (long i = 0; i < nel; ++i) xn->grad[i] += g;
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> transpose_last2(const Tensor<Real>& x) {
    if (x.dim() < 2) throw ShapeError("transpose_last2 on " + shape_str(x.shape()));
    const long a = x.extent(-2), b = x.extent(-1);
    Shape out_shape = x.shape();
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    Tensor<Real> out = Tensor<Real>::zeros(out_shape);
    const long batch = x.numel() / (a * b);
    const Real* xv = x.values().data();
    Real* ov = out.values().data();
    for (long t = 0; t < batch; ++t) {
        const Real* src = xv + t * a * b;
        Real* dst = ov + t * a * b;
        for (long i = 0; i < a; ++i)
            for (long j = 0; j < b; ++j) dst[j * a + i] = src[i * b + j];
    }

    const bool tracked = detail::track<Real>({&x});
    Tape<Real>* tape = detail::merge_tapes<Real>({&x});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([xn = x.node_, on = out.node_, a, b, batch]() {
            if (on->grad.empty() || !xn->requires_grad) return;
            if (xn->grad.empty()) xn->grad.assign(xn->value.size(), Real(0));
            for (long t = 0; t < batch; ++t) {
                const Real* gsrc = on->grad.data() + t * a * b;
                Real* gdst = xn->grad.data() + t * a * b;
                for (long i = 0; i < a; ++i)
                    for (long j = 0; j < b; ++j) gdst[i * b + j] += gsrc[j * a + i];
            }
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(new_shape) +
                         " changes element count");
    Tensor<Real> out = Tensor<Real>::from(std::move(new_shape), x.values());

    const bool tracked = detail::track<Real>({&x});
    Tape<Real>* tape = detail::merge_tapes<Real>({&x});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([xn = x.node_, on = out.node_]() {
            if (on->grad.empty() || !xn->requires_grad) return;
            if (xn->grad.empty()) xn->grad.assign(xn->value.size(), Real(0));
            for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> concat_lastdim(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw ShapeError("concat_lastdim of zero tensors");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    long total_last = 0;
    for (const auto& p : parts) {
        Shape pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead)
            throw ShapeError("concat_lastdim leading dims differ: " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(p.shape()));
        total_last += p.extent(-1);
    }
    const long rows = shape_numel(lead);
    Shape out_shape = lead;
    out_shape.push_back(total_last);
    Tensor<Real> out = Tensor<Real>::zeros(out_shape);

    long off = 0;
    for (const auto& p : parts) {
        const long w = p.extent(-1);
        const Real* pv = p.values().data();
        Real* ov = out.values().data();
        for (long r = 0; r < rows; ++r)
            std::copy(pv + r * w, pv + (r + 1) * w, ov + r * total_last + off);
        off += w;
    }

    std::vector<const Tensor<Real>*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    bool tracked = false;
    Tape<Real>* tape = nullptr;
    for (const auto& p : parts) {
        if (grad_enabled() && p.requires_grad()) tracked = true;
        if (p.tape() != nullptr) {
            if (tape == nullptr) tape = p.tape();
            else if (tape != p.tape()) throw NumericError("operands recorded on different tapes");
        }
    }
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        std::vector<std::shared_ptr<TensorNode<Real>>> nodes;
        for (const auto& p : parts) nodes.push_back(p.node_);
        tape->record([nodes, on = out.node_, rows, total_last]() {
            if (on->grad.empty()) return;
            long off2 = 0;
            for (auto& nd : nodes) {
                const long w = static_cast<long>(nd->value.size()) / rows;
                if (nd->requires_grad) {
                    if (nd->grad.empty()) nd->grad.assign(nd->value.size(), Real(0));
                    for (long r = 0; r < rows; ++r)
                        for (long j = 0; j < w; ++j)
                            nd->grad[r * w + j] += on->grad[r * total_last + off2 + j];
                }
                off2 += w;
            }
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> concat_lastdim(const Tensor<Real>& a, const Tensor<Real>& b) {
    return concat_lastdim(std::vector<Tensor<Real>>{a, b});
}

template <typename Real>
Tensor<Real> slice_lastdim(const Tensor<Real>& x, long offset, long len) {
    const long w = x.extent(-1);
    if (offset < 0 || len <= 0 || offset + len > w)
        throw ShapeError("slice_lastdim [" + std::to_string(offset) + "," +
                         std::to_string(offset + len) + ") out of range for " +
                         shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape.back() = len;
    Tensor<Real> out = Tensor<Real>::zeros(out_shape);
    const long rows = x.numel() / w;
    const Real* xv = x.values().data();
    Real* ov = out.values().data();
    for (long r = 0; r < rows; ++r)
        std::copy(xv + r * w + offset, xv + r * w + offset + len, ov + r * len);

    const bool tracked = detail::track<Real>({&x});
    Tape<Real>* tape = detail::merge_tapes<Real>({&x});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([xn = x.node_, on = out.node_, rows, w, offset, len]() {
            if (on->grad.empty() || !xn->requires_grad) return;
            if (xn->grad.empty()) xn->grad.assign(xn->value.size(), Real(0));
            for (long r = 0; r < rows; ++r)
                for (long j = 0; j < len; ++j)
                    xn->grad[r * w + offset + j] += on->grad[r * len + j];
        });
    }
    return out;
}

// Stacks n copies of x along a new leading dimension; the gradient sums over
// the copies. This is the explicit replication used instead of broadcasting.
template <typename Real>
Tensor<Real> repeat_leading(const Tensor<Real>& x, long n) {
    if (n < 1) throw ShapeError("repeat_leading count must be >= 1");
    Shape out_shape;
    out_shape.push_back(n);
    for (long e : x.shape()) out_shape.push_back(e);
    Tensor<Real> out = Tensor<Real>::zeros(out_shape);
    const long nel = x.numel();
    for (long t = 0; t < n; ++t)
        std::copy(x.values().begin(), x.values().end(), out.values().begin() + t * nel);

    const bool tracked = detail::track<Real>({&x});
    Tape<Real>* tape = detail::merge_tapes<Real>({&x});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([xn = x.node_, on = out.node_, n, nel]() {
            if (on->grad.empty() || !xn->requires_grad) return;
            if (xn->grad.empty()) xn->grad.assign(xn->value.size(), Real(0));
            for (long t = 0; t < n; ++t)
                for (long i = 0; i < nel; ++i) xn->grad[i] += on->grad[t * nel + i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// RMS normalization over the last dimension with learnable gain:
//   y_i = x_i * gamma_i / sqrt(mean(x^2) + eps)
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> rms_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, Real eps) {
    const long d = x.extent(-1);
    if (gamma.dim() != 1 || gamma.extent(0) != d)
        throw ShapeError("rms_norm gain " + shape_str(gamma.shape()) + " does not match last dim of " +
                         shape_str(x.shape()));
    const long rows = x.numel() / d;
    Tensor<Real> out = Tensor<Real>::zeros(x.shape());
    std::vector<Real> inv_rms(static_cast<std::size_t>(rows));
    const Real* xv = x.values().data();
    const Real* gv = gamma.values().data();
    Real* ov = out.values().data();
    for (long r = 0; r < rows; ++r) {
        const Real* row = xv + r * d;
        Real ms = 0;
        for (long j = 0; j < d; ++j) ms += row[j] * row[j];
        ms = ms / static_cast<Real>(d) + eps;
        const Real inv = Real(1) / std::sqrt(ms);
        inv_rms[static_cast<std::size_t>(r)] = inv;
        Real* orow = ov + r * d;
        for (long j = 0; j < d; ++j) orow[j] = row[j] * gv[j] * inv;
    }

    const bool tracked = detail::track<Real>({&x, &gamma});
    Tape<Real>* tape = detail::merge_tapes<Real>({&x, &gamma});
    detail::mark_output(out, tracked, tape);
    if (tracked) {
        tape->record([xn = x.node_, gn = gamma.node_, on = out.node_, inv_rms, rows, d]() {
            if (on->grad.empty()) return;
            const Real* g = on->grad.data();
            for (long r = 0; r < rows; ++r) {
                const Real inv = inv_rms[static_cast<std::size_t>(r)];
                const Real* xrow = xn->value.data() + r * d;
                const Real* grow = g + r * d;
                if (xn->requires_grad) {
                    if (xn->grad.empty()) xn->grad.assign(xn->value.size(), Real(0));
                    // d y_i / d x_j = gamma_i * inv * (delta_ij - x_i x_j inv^2 / d)
                    Real dot = 0;
                    for (long j = 0; j < d; ++j) dot += grow[j] * gn->value[j] * xrow[j];
                    dot *= inv * inv * inv / static_cast<Real>(d);
                    Real* dx = xn->grad.data() + r * d;
                    for (long j = 0; j < d; ++j)
                        dx[j] += grow[j] * gn->value[j] * inv - xrow[j] * dot;
                }
                if (gn->requires_grad) {
                    if (gn->grad.empty()) gn->grad.assign(gn->value.size(), Real(0));
                    for (long j = 0; j < d; ++j) gn->grad[j] += grow[j] * xrow[j] * inv;
                }
            }
        });
    }
    return out;
}

}  // namespace penguin
