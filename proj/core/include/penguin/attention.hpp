#pragma once

#include <vector>

#include "penguin/bias.hpp"
#include "penguin/rng.hpp"
#include "penguin/tensor.hpp"

namespace penguin {

// Grouped multi-query attention: heads are partitioned into groups, each
// group shares one key and one value projection. Per-head additive bias is
// applied after the 1/sqrt(d_h) scaling. Additive masking uses a large
// negative constant; masked weights underflow to exactly zero.

inline constexpr double kMaskNegative = -1e9;

template <typename Real>
struct AttentionParams {
    long d = 0;
    long heads = 0;
    long groups = 0;
    long d_head = 0;

    Tensor<Real> w_q;                 // d x heads*d_head
    std::vector<Tensor<Real>> w_k;    // groups entries, d x d_head
    std::vector<Tensor<Real>> w_v;    // groups entries, d x d_head
    Tensor<Real> w_o;                 // heads*d_head x d

    // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init; tape may be null for
    // frozen parameters
    static AttentionParams init(long d, long heads, long groups, Rng& rng, Tape<Real>* tape);

    long group_of(long head_index0) const { return head_index0 / (heads / groups); }
    std::vector<Tensor<Real>*> parameters();
};

// Reference multi-head attention with per-head keys and values; same bias and
// mask semantics. Serves as the dense oracle for the grouped path and as the
// baseline of the timing comparison.
template <typename Real>
struct MhaParams {
    long d = 0;
    long heads = 0;
    long d_head = 0;

    Tensor<Real> w_q;
    std::vector<Tensor<Real>> w_k;    // heads entries
    std::vector<Tensor<Real>> w_v;    // heads entries
    Tensor<Real> w_o;

    static MhaParams init(long d, long heads, Rng& rng, Tape<Real>* tape);
    // Copies the grouped parameters, replicating each group's K/V to all of
    // its heads; the two attention paths then compute identical outputs.
    static MhaParams replicate_from(const AttentionParams<Real>& gqa, Tape<Real>* tape);
    std::vector<Tensor<Real>*> parameters();
};

// Post-softmax weights of the first batch element, one N x N matrix per head.
template <typename Real>
struct AttentionCapture {
    long n_tokens = 0;
    std::vector<std::vector<Real>> head_weights;
};

// Converts a bias stack to constant tensors in the compute precision, merging
// the additive mask when one is given.
template <typename Real>
std::vector<Tensor<Real>> make_head_bias_tensors(const std::vector<HeadBias>& stack,
                                                 const Mask* mask);

// x: [N,d] or [batch,N,d]; head_bias: one [N,N] constant per head (mask
// already merged). Differentiable end to end.
template <typename Real>
Tensor<Real> penguin_attention(const Tensor<Real>& x, const AttentionParams<Real>& params,
                               const std::vector<Tensor<Real>>& head_bias,
                               AttentionCapture<Real>* capture = nullptr);

template <typename Real>
Tensor<Real> mha_reference(const Tensor<Real>& x, const MhaParams<Real>& params,
                           const std::vector<Tensor<Real>>& head_bias,
                           AttentionCapture<Real>* capture = nullptr);

}  // namespace penguin
