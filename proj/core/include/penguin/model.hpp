#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "penguin/attention.hpp"
#include "penguin/bias.hpp"
#include "penguin/rng.hpp"
#include "penguin/tensor.hpp"

namespace penguin {

enum class Precision { F32, F64 };

Precision parse_precision(const std::string& name);  // "f32" | "f64"
std::string precision_name(Precision p);

// Full model hyperparameters. N (token count) and the patched period set are
// derived, never stored.
struct PenguinConfig {
    long lookback = 336;   // input timesteps L
    long horizon = 96;     // forecast timesteps H
    long channels = 1;     // variates C
    long patch_len = 16;   // P
    long stride = 8;       // S
    long d_model = 128;
    long d_ff = 256;
    long heads = 12;
    long layers = 2;       // encoder depth E
    BiasRegime regime = BiasRegime::NonPeriodic;
    std::vector<long> periods;  // raw periods in timesteps
    bool causal = true;
    double eps = 1e-5;
    Precision precision = Precision::F32;

    long n_patches() const { return (lookback - patch_len) / stride + 2; }
    long d_head() const { return d_model / heads; }
    PeriodSet period_set() const { return PeriodSet::from_raw(periods, stride); }
    long group_count() const;
    void validate() const;  // throws ConfigError
};

// Per-channel standardization statistics captured by revin_normalize;
// scale = sqrt(population variance + eps).
struct RevinState {
    std::vector<double> mean;
    std::vector<double> scale;
    double eps = 1e-5;

    long channels() const { return static_cast<long>(mean.size()); }
};

// number of patches for a series of length len
long patch_count(long len, long patch_len, long stride);

// Sliding patches with the tail padded by repeating the final value; writes
// patch_count(len,P,S) rows of P into out.
void patchify_series(const double* x, long len, long patch_len, long stride, double* out);

// ---------------------------------------------------------------------------
// Spec-level single-sample ops (the training path uses the batched
// equivalents inside Forecaster).
// ---------------------------------------------------------------------------

template <typename Real>
std::pair<Tensor<Real>, RevinState> revin_normalize(const Tensor<Real>& x /*[L,C]*/, double eps);

template <typename Real>
Tensor<Real> revin_denormalize(const Tensor<Real>& y /*[H,C]*/, const RevinState& state);

template <typename Real>
Tensor<Real> patchify(const Tensor<Real>& x_channel /*[L]*/, long patch_len, long stride);

// Eq-style squared error: sum over channels, mean over horizon steps (and
// over any leading batch dims).
template <typename Real>
Tensor<Real> mse_loss(const Tensor<Real>& pred, const Tensor<Real>& target);

template <typename Real>
struct EncoderLayerParams {
    AttentionParams<Real> attn;
    Tensor<Real> gamma_attn;  // [d]
    Tensor<Real> w_f1;        // [d, d_ff]
    Tensor<Real> b_f1;        // [d_ff]
    Tensor<Real> w_f2;        // [d_ff, d]
    Tensor<Real> b_f2;        // [d]
    Tensor<Real> gamma_ffn;   // [d]
};

// x + RMSNorm(attention(x)), then + RMSNorm(FFN(.)) on the result
template <typename Real>
Tensor<Real> encoder_layer(const Tensor<Real>& x, const EncoderLayerParams<Real>& p,
                           const std::vector<Tensor<Real>>& head_bias, Real eps,
                           AttentionCapture<Real>* capture = nullptr);

// adds a [d] vector to every row of a [..., d] tensor (explicit replication)
template <typename Real>
Tensor<Real> add_rowvec(const Tensor<Real>& x, const Tensor<Real>& v);

// ---------------------------------------------------------------------------
// Forecaster: revin -> patch -> embed + positions -> E encoder layers ->
// flatten -> linear horizon head -> revin restore. Channel independent: every
// channel runs through the same parameters as a separate batch row.
// ---------------------------------------------------------------------------

template <typename Real>
class Forecaster {
  public:
    Forecaster(const PenguinConfig& config, std::uint64_t seed);

    const PenguinConfig& config() const { return config_; }
    Tape<Real>& tape() { return *tape_; }

    // inputs: B pointers to row-major [L, C] blocks in data scale.
    // Returns predictions [B*C, H], row b*C+c, data scale, differentiable
    // w.r.t. parameters.
    Tensor<Real> forward_batch(const std::vector<const double*>& inputs,
                               AttentionCapture<Real>* capture = nullptr);

    // Eq-style training loss against targets laid out like the predictions.
    Tensor<Real> loss_batch(const std::vector<const double*>& inputs,
                            const std::vector<const double*>& targets);

    // single sample [L,C] -> [H,C] row-major, no grad tracking
    std::vector<double> predict(const double* input, AttentionCapture<Real>* capture = nullptr);

    // spec-level single-sample forward
    Tensor<Real> forward(const Tensor<Real>& x /*[L,C]*/);

    std::vector<std::pair<std::string, Tensor<Real>*>> named_parameters();
    std::vector<Tensor<Real>*> parameters();
    void zero_grad();

    // value copy of all parameters, in manifest order
    std::vector<std::vector<Real>> snapshot() const;
    void restore(const std::vector<std::vector<Real>>& snap);

    const std::vector<HeadBias>& bias_stack() const { return bias_stack_; }

  private:
    PenguinConfig config_;
    std::unique_ptr<Tape<Real>> tape_;

    Tensor<Real> w_patch_;  // [P, d]
    Tensor<Real> b_patch_;  // [d]
    Tensor<Real> pos_;      // [N, d]
    std::vector<EncoderLayerParams<Real>> layers_;
    Tensor<Real> w_head_;   // [N*d, H]
    Tensor<Real> b_head_;   // [H]

    std::vector<HeadBias> bias_stack_;        // cached per (config, N)
    std::vector<Tensor<Real>> head_bias_;     // constants, mask merged
};

using ForecasterF32 = Forecaster<float>;
using ForecasterF64 = Forecaster<double>;

}  // namespace penguin
