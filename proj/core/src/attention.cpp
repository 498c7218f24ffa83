#include "penguin/attention.hpp"

#include <cmath>

namespace penguin {

namespace {

template <typename Real>
Tensor<Real> make_weight(long rows, long cols, Rng& rng, Tape<Real>* tape) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    std::vector<Real> w(static_cast<std::size_t>(rows * cols));
    for (auto& x : w) x = static_cast<Real>(rng.uniform(-bound, bound));
    if (tape != nullptr) return Tensor<Real>::leaf({rows, cols}, std::move(w), *tape);
    return Tensor<Real>::from({rows, cols}, std::move(w));
}

template <typename Real>
void check_attention_inputs(const Tensor<Real>& x, long d, long heads,
                            const std::vector<Tensor<Real>>& head_bias) {
    if (x.dim() != 2 && x.dim() != 3)
        throw ShapeError("attention input must be [N,d] or [B,N,d], got " + shape_str(x.shape()));
    if (x.extent(-1) != d)
        throw ShapeError("attention input width " + std::to_string(x.extent(-1)) +
                         " does not match model width " + std::to_string(d));
    const long n = x.extent(-2);
    if (static_cast<long>(head_bias.size()) != heads)
        throw ShapeError("bias stack has " + std::to_string(head_bias.size()) + " entries for " +
                         std::to_string(heads) + " heads");
    for (const auto& b : head_bias)
        if (b.dim() != 2 || b.extent(0) != n || b.extent(1) != n)
            throw ShapeError("head bias " + shape_str(b.shape()) + " does not match token count " +
                             std::to_string(n));
}

// shared core: per-head scores against the head's key/value tensors
template <typename Real>
Tensor<Real> attention_core(const Tensor<Real>& x, const Tensor<Real>& w_q,
                            const std::vector<Tensor<Real>>& keys_t,   // per head [.., d_h, N]
                            const std::vector<Tensor<Real>>& vals,     // per head [.., N, d_h]
                            const Tensor<Real>& w_o, long heads, long d_head,
                            const std::vector<Tensor<Real>>& head_bias,
                            AttentionCapture<Real>* capture) {
    const long n = x.extent(-2);
    const bool batched = x.dim() == 3;
    const long batch = batched ? x.extent(0) : 1;
    const Real inv_sqrt_dh = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(d_head)));

    if (capture != nullptr) {
        capture->n_tokens = n;
        capture->head_weights.assign(static_cast<std::size_t>(heads), {});
    }

    Tensor<Real> q_all = matmul(x, w_q);  // [.., N, heads*d_head]
    std::vector<Tensor<Real>> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (long h = 0; h < heads; ++h) {
        Tensor<Real> q = slice_lastdim(q_all, h * d_head, d_head);
        Tensor<Real> scores = scale(matmul(q, keys_t[static_cast<std::size_t>(h)]), inv_sqrt_dh);
        Tensor<Real> bias = head_bias[static_cast<std::size_t>(h)];
        if (batched) bias = repeat_leading(bias, batch);
        Tensor<Real> weights = softmax_lastdim(add(scores, bias));
        if (capture != nullptr) {
            auto& dst = capture->head_weights[static_cast<std::size_t>(h)];
            dst.assign(weights.values().begin(), weights.values().begin() + n * n);
        }
        outs.push_back(matmul(weights, vals[static_cast<std::size_t>(h)]));
    }
    return matmul(concat_lastdim(outs), w_o);
}

}  // namespace

template <typename Real>
AttentionParams<Real> AttentionParams<Real>::init(long d, long heads, long groups, Rng& rng,
                                                  Tape<Real>* tape) {
    if (d < 1 || heads < 1 || groups < 1) throw ConfigError("attention extents must be >= 1");
    if (heads % groups != 0)
        throw ConfigError("group count " + std::to_string(groups) + " does not divide head count " +
                          std::to_string(heads));
    AttentionParams p;
    p.d = d;
    p.heads = heads;
    p.groups = groups;
    p.d_head = d / heads;
    if (p.d_head < 1)
        throw ConfigError("model width " + std::to_string(d) + " too small for " +
                          std::to_string(heads) + " heads");
    p.w_q = make_weight<Real>(d, heads * p.d_head, rng, tape);
    for (long g = 0; g < groups; ++g) {
        p.w_k.push_back(make_weight<Real>(d, p.d_head, rng, tape));
        p.w_v.push_back(make_weight<Real>(d, p.d_head, rng, tape));
    }
    p.w_o = make_weight<Real>(heads * p.d_head, d, rng, tape);
    return p;
}

template <typename Real>
std::vector<Tensor<Real>*> AttentionParams<Real>::parameters() {
    std::vector<Tensor<Real>*> ps{&w_q};
    for (auto& t : w_k) ps.push_back(&t);
    for (auto& t : w_v) ps.push_back(&t);
    ps.push_back(&w_o);
    return ps;
}

template <typename Real>
MhaParams<Real> MhaParams<Real>::init(long d, long heads, Rng& rng, Tape<Real>* tape) {
    if (d < 1 || heads < 1) throw ConfigError("attention extents must be >= 1");
    MhaParams p;
    p.d = d;
    p.heads = heads;
    p.d_head = d / heads;
    if (p.d_head < 1)
        throw ConfigError("model width " + std::to_string(d) + " too small for " +
                          std::to_string(heads) + " heads");
    p.w_q = make_weight<Real>(d, heads * p.d_head, rng, tape);
    for (long h = 0; h < heads; ++h) {
        p.w_k.push_back(make_weight<Real>(d, p.d_head, rng, tape));
        p.w_v.push_back(make_weight<Real>(d, p.d_head, rng, tape));
    }
    p.w_o = make_weight<Real>(heads * p.d_head, d, rng, tape);
    return p;
}

template <typename Real>
MhaParams<Real> MhaParams<Real>::replicate_from(const AttentionParams<Real>& gqa,
                                                Tape<Real>* tape) {
    MhaParams p;
    p.d = gqa.d;
    p.heads = gqa.heads;
    p.d_head = gqa.d_head;
    auto clone = [tape](const Tensor<Real>& src) {
        if (tape != nullptr) return Tensor<Real>::leaf(src.shape(), src.values(), *tape);
        return Tensor<Real>::from(src.shape(), src.values());
    };
    p.w_q = clone(gqa.w_q);
    for (long h = 0; h < gqa.heads; ++h) {
        const long r = gqa.group_of(h);
        p.w_k.push_back(clone(gqa.w_k[static_cast<std::size_t>(r)]));
        p.w_v.push_back(clone(gqa.w_v[static_cast<std::size_t>(r)]));
    }
    p.w_o = clone(gqa.w_o);
    return p;
}

template <typename Real>
std::vector<Tensor<Real>*> MhaParams<Real>::parameters() {
    std::vector<Tensor<Real>*> ps{&w_q};
    for (auto& t : w_k) ps.push_back(&t);
    for (auto& t : w_v) ps.push_back(&t);
    ps.push_back(&w_o);
    return ps;
}

template <typename Real>
std::vector<Tensor<Real>> make_head_bias_tensors(const std::vector<HeadBias>& stack,
                                                 const Mask* mask) {
    std::vector<Tensor<Real>> out;
    out.reserve(stack.size());
    for (const auto& hb : stack) {
        const long rows = hb.mat.rows, cols = hb.mat.cols;
        if (mask != nullptr &&
            (mask->shape.size() != 2 || mask->shape[0] != rows || mask->shape[1] != cols))
            throw ShapeError("mask shape " + shape_str(mask->shape) + " does not match bias " +
                             std::to_string(rows) + "x" + std::to_string(cols));
        std::vector<Real> v(hb.mat.v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double x = hb.mat.v[i];
            if (mask != nullptr && mask->allowed[i] == 0) x += kMaskNegative;
            v[i] = static_cast<Real>(x);
        }
        out.push_back(Tensor<Real>::from({rows, cols}, std::move(v)));
    }
    return out;
}

template <typename Real>
Tensor<Real> penguin_attention(const Tensor<Real>& x, const AttentionParams<Real>& params,
                               const std::vector<Tensor<Real>>& head_bias,
                               AttentionCapture<Real>* capture) {
    check_attention_inputs(x, params.d, params.heads, head_bias);
    // group-shared keys/values, computed once per group
    std::vector<Tensor<Real>> group_kt, group_v;
    for (long g = 0; g < params.groups; ++g) {
        group_kt.push_back(transpose_last2(matmul(x, params.w_k[static_cast<std::size_t>(g)])));
        group_v.push_back(matmul(x, params.w_v[static_cast<std::size_t>(g)]));
    }
    std::vector<Tensor<Real>> keys_t, vals;
    for (long h = 0; h < params.heads; ++h) {
        const long g = params.group_of(h);
        keys_t.push_back(group_kt[static_cast<std::size_t>(g)]);
        vals.push_back(group_v[static_cast<std::size_t>(g)]);
    }
    return attention_core(x, params.w_q, keys_t, vals, params.w_o, params.heads, params.d_head,
                          head_bias, capture);
}

template <typename Real>
Tensor<Real> mha_reference(const Tensor<Real>& x, const MhaParams<Real>& params,
                           const std::vector<Tensor<Real>>& head_bias,
                           AttentionCapture<Real>* capture) {
    check_attention_inputs(x, params.d, params.heads, head_bias);
    std::vector<Tensor<Real>> keys_t, vals;
    for (long h = 0; h < params.heads; ++h) {
        keys_t.push_back(transpose_last2(matmul(x, params.w_k[static_cast<std::size_t>(h)])));
        vals.push_back(matmul(x, params.w_v[static_cast<std::size_t>(h)]));
    }
    return attention_core(x, params.w_q, keys_t, vals, params.w_o, params.heads, params.d_head,
                          head_bias, capture);
}

template struct AttentionParams<float>;
template struct AttentionParams<double>;
template struct MhaParams<float>;
template struct MhaParams<double>;

template std::vector<Tensor<float>> make_head_bias_tensors<float>(const std::vector<HeadBias>&,
                                                                  const Mask*);
template std::vector<Tensor<double>> make_head_bias_tensors<double>(const std::vector<HeadBias>&,
                                                                    const Mask*);

template Tensor<float> penguin_attention<float>(const Tensor<float>&, const AttentionParams<float>&,
                                                const std::vector<Tensor<float>>&,
                                                AttentionCapture<float>*);
template Tensor<double> penguin_attention<double>(const Tensor<double>&,
                                                  const AttentionParams<double>&,
                                                  const std::vector<Tensor<double>>&,
                                                  AttentionCapture<double>*);
template Tensor<float> mha_reference<float>(const Tensor<float>&, const MhaParams<float>&,
                                            const std::vector<Tensor<float>>&,
                                            AttentionCapture<float>*);
template Tensor<double> mha_reference<double>(const Tensor<double>&, const MhaParams<double>&,
                                              const std::vector<Tensor<double>>&,
                                              AttentionCapture<double>*);

}  // namespace penguin
