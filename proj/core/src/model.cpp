#include "penguin/model.hpp"

#include <cmath>

#include "penguin/errors.hpp"

namespace penguin {

Precision parse_precision(const std::string& name) {
    if (name == "f32") return Precision::F32;
    if (name == "f64") return Precision::F64;
    throw ConfigError("unknown precision '" + name + "' (expected f32|f64)");
}

std::string precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

long PenguinConfig::group_count() const {
    const PeriodSet ps = period_set();
    switch (regime) {
        case BiasRegime::NoBias:
        case BiasRegime::NonPeriodic: return 1;
        case BiasRegime::Periodic: return ps.count();
        case BiasRegime::Both: return ps.count() + 1;
    }
    return 1;
}

void PenguinConfig::validate() const {
    if (lookback < 2) throw ConfigError("lookback must be >= 2");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (patch_len < 1 || stride < 1) throw ConfigError("patch_len and stride must be >= 1");
    if (stride > patch_len) throw ConfigError("stride must not exceed patch_len");
    if (patch_len > lookback) throw ConfigError("patch_len must not exceed lookback");
    if (d_model < 1 || d_ff < 1 || heads < 1 || layers < 1)
        throw ConfigError("model extents must be >= 1");
    if (d_model / heads < 1)
        throw ConfigError("d_model " + std::to_string(d_model) + " too small for " +
                          std::to_string(heads) + " heads");
    if (eps <= 0) throw ConfigError("eps must be positive");
    const PeriodSet ps = period_set();  // validates divisibility
    if ((regime == BiasRegime::Periodic || regime == BiasRegime::Both) && ps.empty())
        throw ConfigError(regime_name(regime) + " regime requires at least one period");
    for (long p : ps.patched)
        if (p < 2)
            throw ConfigError("patched period " + std::to_string(p) +
                              " < 2; raw period too small for stride " + std::to_string(stride));
    const long g = group_count();
    if (heads % g != 0)
        throw ConfigError("group count " + std::to_string(g) + " does not divide head count " +
                          std::to_string(heads));
}

long patch_count(long len, long patch_len, long stride) {
    if (len < patch_len) throw ShapeError("series length < patch length");
    return (len - patch_len) / stride + 2;
}

void patchify_series(const double* x, long len, long patch_len, long stride, double* out) {
    const long n = patch_count(len, patch_len, stride);
    const double last = x[len - 1];
    for (long p = 0; p < n; ++p) {
        const long base = p * stride;
        for (long j = 0; j < patch_len; ++j) {
            const long t = base + j;
            out[p * patch_len + j] = t < len ? x[t] : last;
        }
    }
}

// ---------------------------------------------------------------------------
// revin
// ---------------------------------------------------------------------------

namespace {

// population mean/std over a strided channel
void channel_stats(const double* x, long len, long stride, double eps, double& mean_out,
                   double& scale_out) {
    double m = 0;
    for (long t = 0; t < len; ++t) m += x[t * stride];
    m /= static_cast<double>(len);
    double var = 0;
    for (long t = 0; t < len; ++t) {
        const double d = x[t * stride] - m;
        var += d * d;
    }
    var /= static_cast<double>(len);
    mean_out = m;
    scale_out = std::sqrt(var + eps);
}

}  // namespace

template <typename Real>
std::pair<Tensor<Real>, RevinState> revin_normalize(const Tensor<Real>& x, double eps) {
    if (x.dim() != 2) throw ShapeError("revin_normalize expects [L,C], got " + shape_str(x.shape()));
    const long rows = x.extent(0), cols = x.extent(1);
    if (rows < 2) throw ShapeError("revin_normalize needs at least 2 rows");
    for (Real v : x.values())
        if (!std::isfinite(static_cast<double>(v))) throw NumericError("revin: non-finite input");

    RevinState st;
    st.eps = eps;
    st.mean.resize(static_cast<std::size_t>(cols));
    st.scale.resize(static_cast<std::size_t>(cols));
    std::vector<double> xd(x.values().begin(), x.values().end());
    for (long c = 0; c < cols; ++c)
        channel_stats(xd.data() + c, rows, cols, eps, st.mean[static_cast<std::size_t>(c)],
                      st.scale[static_cast<std::size_t>(c)]);

    std::vector<Real> out(x.values().size());
    for (long t = 0; t < rows; ++t)
        for (long c = 0; c < cols; ++c)
            out[static_cast<std::size_t>(t * cols + c)] = static_cast<Real>(
                (xd[static_cast<std::size_t>(t * cols + c)] - st.mean[static_cast<std::size_t>(c)]) /
                st.scale[static_cast<std::size_t>(c)]);
    return {Tensor<Real>::from({rows, cols}, std::move(out)), st};
}

template <typename Real>
Tensor<Real> revin_denormalize(const Tensor<Real>& y, const RevinState& state) {
    if (y.dim() != 2) throw ShapeError("revin_denormalize expects [H,C], got " + shape_str(y.shape()));
    const long rows = y.extent(0), cols = y.extent(1);
    if (cols != state.channels())
        throw ShapeError("revin state has " + std::to_string(state.channels()) +
                         " channels, output has " + std::to_string(cols));
    std::vector<Real> sc(static_cast<std::size_t>(rows * cols)), mu(sc.size());
    for (long t = 0; t < rows; ++t)
        for (long c = 0; c < cols; ++c) {
            sc[static_cast<std::size_t>(t * cols + c)] =
                static_cast<Real>(state.scale[static_cast<std::size_t>(c)]);
            mu[static_cast<std::size_t>(t * cols + c)] =
                static_cast<Real>(state.mean[static_cast<std::size_t>(c)]);
        }
    Tensor<Real> scale_t = Tensor<Real>::from({rows, cols}, std::move(sc));
    Tensor<Real> mean_t = Tensor<Real>::from({rows, cols}, std::move(mu));
    return add(mul(y, scale_t), mean_t);
}

template <typename Real>
Tensor<Real> patchify(const Tensor<Real>& x_channel, long patch_len, long stride) {
    if (x_channel.dim() != 1)
        throw ShapeError("patchify expects a 1-D series, got " + shape_str(x_channel.shape()));
    const long len = x_channel.extent(0);
    const long n = patch_count(len, patch_len, stride);
    std::vector<double> xd(x_channel.values().begin(), x_channel.values().end());
    std::vector<double> buf(static_cast<std::size_t>(n * patch_len));
    patchify_series(xd.data(), len, patch_len, stride, buf.data());
    std::vector<Real> out(buf.begin(), buf.end());
    return Tensor<Real>::from({n, patch_len}, std::move(out));
}

template <typename Real>
Tensor<Real> mse_loss(const Tensor<Real>& pred, const Tensor<Real>& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse_loss shapes differ: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    if (pred.dim() < 2) throw ShapeError("mse_loss expects [..., H, C]");
    Tensor<Real> diff = sub(pred, target);
    return scale(mean(mul(diff, diff)), static_cast<Real>(pred.extent(-1)));
}

template <typename Real>
Tensor<Real> add_rowvec(const Tensor<Real>& x, const Tensor<Real>& v) {
    if (v.dim() != 1 || x.extent(-1) != v.extent(0))
        throw ShapeError("add_rowvec " + shape_str(x.shape()) + " + " + shape_str(v.shape()));
    const long rows = x.numel() / v.extent(0);
    return add(x, reshape(repeat_leading(v, rows), x.shape()));
}

template <typename Real>
Tensor<Real> encoder_layer(const Tensor<Real>& x, const EncoderLayerParams<Real>& p,
                           const std::vector<Tensor<Real>>& head_bias, Real eps,
                           AttentionCapture<Real>* capture) {
    Tensor<Real> attn = penguin_attention(x, p.attn, head_bias, capture);
    Tensor<Real> x1 = add(x, rms_norm(attn, p.gamma_attn, eps));
    Tensor<Real> hidden = relu(add_rowvec(matmul(x1, p.w_f1), p.b_f1));
    Tensor<Real> ffn = add_rowvec(matmul(hidden, p.w_f2), p.b_f2);
    return add(x1, rms_norm(ffn, p.gamma_ffn, eps));
}

// ---------------------------------------------------------------------------
// Forecaster
// ---------------------------------------------------------------------------

namespace {

template <typename Real>
Tensor<Real> init_uniform(Shape shape, long fan_in, Rng& rng, Tape<Real>& tape) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<Real> w(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : w) x = static_cast<Real>(rng.uniform(-bound, bound));
    return Tensor<Real>::leaf(std::move(shape), std::move(w), tape);
}

template <typename Real>
Tensor<Real> init_normal(Shape shape, double sigma, Rng& rng, Tape<Real>& tape) {
    std::vector<Real> w(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : w) x = static_cast<Real>(rng.normal(0.0, sigma));
    return Tensor<Real>::leaf(std::move(shape), std::move(w), tape);
}

template <typename Real>
Tensor<Real> init_const(Shape shape, Real v, Tape<Real>& tape) {
    std::vector<Real> w(static_cast<std::size_t>(shape_numel(shape)), v);
    return Tensor<Real>::leaf(std::move(shape), std::move(w), tape);
}

}  // namespace

template <typename Real>
Forecaster<Real>::Forecaster(const PenguinConfig& config, std::uint64_t seed)
    : config_(config), tape_(std::make_unique<Tape<Real>>()) {
    config_.validate();
    const long n = config_.n_patches();
    const long d = config_.d_model;
    Rng rng(seed);

    w_patch_ = init_uniform<Real>({config_.patch_len, d}, config_.patch_len, rng, *tape_);
    b_patch_ = init_const<Real>({d}, Real(0), *tape_);
    pos_ = init_normal<Real>({n, d}, 0.02, rng, *tape_);
    for (long l = 0; l < config_.layers; ++l) {
        EncoderLayerParams<Real> lp;
        lp.attn =
            AttentionParams<Real>::init(d, config_.heads, config_.group_count(), rng, tape_.get());
        lp.gamma_attn = init_const<Real>({d}, Real(1), *tape_);
        lp.w_f1 = init_uniform<Real>({d, config_.d_ff}, d, rng, *tape_);
        lp.b_f1 = init_const<Real>({config_.d_ff}, Real(0), *tape_);
        lp.w_f2 = init_uniform<Real>({config_.d_ff, d}, config_.d_ff, rng, *tape_);
        lp.b_f2 = init_const<Real>({d}, Real(0), *tape_);
        lp.gamma_ffn = init_const<Real>({d}, Real(1), *tape_);
        layers_.push_back(std::move(lp));
    }
    w_head_ = init_uniform<Real>({n * d, config_.horizon}, n * d, rng, *tape_);
    b_head_ = init_const<Real>({config_.horizon}, Real(0), *tape_);

    // bias matrices carry no trainable parameters; build once and cache
    bias_stack_ = assemble_bias_stack(config_.heads, config_.regime, config_.period_set(), n);
    if (config_.causal) {
        const Mask mask = causal_mask(n, n);
        head_bias_ = make_head_bias_tensors<Real>(bias_stack_, &mask);
    } else {
        head_bias_ = make_head_bias_tensors<Real>(bias_stack_, nullptr);
    }
}

template <typename Real>
Tensor<Real> Forecaster<Real>::forward_batch(const std::vector<const double*>& inputs,
                                             AttentionCapture<Real>* capture) {
    const long batch = static_cast<long>(inputs.size());
    if (batch < 1) throw ShapeError("forward_batch on empty batch");
    const long L = config_.lookback, C = config_.channels, P = config_.patch_len;
    const long n = config_.n_patches(), d = config_.d_model, H = config_.horizon;
    const long rows = batch * C;

    // revin + patching happen outside the tape: inputs carry no gradient
    std::vector<Real> patches(static_cast<std::size_t>(rows * n * P));
    std::vector<Real> denorm_scale(static_cast<std::size_t>(rows * H));
    std::vector<Real> denorm_mean(static_cast<std::size_t>(rows * H));
    std::vector<double> chan(static_cast<std::size_t>(L));
    std::vector<double> patch_buf(static_cast<std::size_t>(n * P));
    for (long b = 0; b < batch; ++b) {
        const double* x = inputs[static_cast<std::size_t>(b)];
        for (long c = 0; c < C; ++c) {
            const long r = b * C + c;
            double mu, sc;
            channel_stats(x + c, L, C, config_.eps, mu, sc);
            for (long t = 0; t < L; ++t) {
                const double v = x[t * C + c];
                if (!std::isfinite(v)) throw NumericError("forward: non-finite input");
                chan[static_cast<std::size_t>(t)] = (v - mu) / sc;
            }
            patchify_series(chan.data(), L, P, config_.stride, patch_buf.data());
            Real* dst = patches.data() + r * n * P;
            for (long i = 0; i < n * P; ++i) dst[i] = static_cast<Real>(patch_buf[static_cast<std::size_t>(i)]);
            for (long t = 0; t < H; ++t) {
                denorm_scale[static_cast<std::size_t>(r * H + t)] = static_cast<Real>(sc);
                denorm_mean[static_cast<std::size_t>(r * H + t)] = static_cast<Real>(mu);
            }
        }
    }

    Tensor<Real> x = Tensor<Real>::from({rows, n, P}, std::move(patches));
    Tensor<Real> e = add_rowvec(matmul(x, w_patch_), b_patch_);
    e = add(e, repeat_leading(pos_, rows));
    for (long l = 0; l < config_.layers; ++l)
        e = encoder_layer(e, layers_[static_cast<std::size_t>(l)], head_bias_,
                          static_cast<Real>(config_.eps), l == 0 ? capture : nullptr);
    Tensor<Real> flat = reshape(e, {rows, n * d});
    Tensor<Real> out = add_rowvec(matmul(flat, w_head_), b_head_);  // [rows, H], revin scale
    Tensor<Real> sc = Tensor<Real>::from({rows, H}, std::move(denorm_scale));
    Tensor<Real> mu = Tensor<Real>::from({rows, H}, std::move(denorm_mean));
    return add(mul(out, sc), mu);
}

template <typename Real>
Tensor<Real> Forecaster<Real>::loss_batch(const std::vector<const double*>& inputs,
                                          const std::vector<const double*>& targets) {
    if (inputs.size() != targets.size()) throw ShapeError("loss_batch input/target count differ");
    const long batch = static_cast<long>(inputs.size());
    const long C = config_.channels, H = config_.horizon;
    Tensor<Real> pred = forward_batch(inputs);

    std::vector<Real> tgt(static_cast<std::size_t>(batch * C * H));
    for (long b = 0; b < batch; ++b) {
        const double* t = targets[static_cast<std::size_t>(b)];  // row-major [H, C]
        for (long c = 0; c < C; ++c)
            for (long s = 0; s < H; ++s)
                tgt[static_cast<std::size_t>((b * C + c) * H + s)] =
                    static_cast<Real>(t[s * C + c]);
    }
    Tensor<Real> target = Tensor<Real>::from({batch * C, H}, std::move(tgt));
    Tensor<Real> diff = sub(pred, target);
    // sum over channels, mean over horizon and batch
    return scale(mean(mul(diff, diff)), static_cast<Real>(C));
}

template <typename Real>
std::vector<double> Forecaster<Real>::predict(const double* input,
                                              AttentionCapture<Real>* capture) {
    NoGradGuard ng;
    Tensor<Real> pred = forward_batch({input}, capture);  // [C, H]
    const long C = config_.channels, H = config_.horizon;
    std::vector<double> out(static_cast<std::size_t>(H * C));
    for (long c = 0; c < C; ++c)
        for (long t = 0; t < H; ++t)
            out[static_cast<std::size_t>(t * C + c)] =
                static_cast<double>(pred.values()[static_cast<std::size_t>(c * H + t)]);
    return out;
}

template <typename Real>
Tensor<Real> Forecaster<Real>::forward(const Tensor<Real>& x) {
    if (x.dim() != 2 || x.extent(0) != config_.lookback || x.extent(1) != config_.channels)
        throw ShapeError("forward expects [" + std::to_string(config_.lookback) + "," +
                         std::to_string(config_.channels) + "], got " + shape_str(x.shape()));
    std::vector<double> xd(x.values().begin(), x.values().end());
    Tensor<Real> pred = forward_batch({xd.data()});  // [C, H]
    return transpose_last2(pred);                    // [H, C]
}

template <typename Real>
std::vector<std::pair<std::string, Tensor<Real>*>> Forecaster<Real>::named_parameters() {
    std::vector<std::pair<std::string, Tensor<Real>*>> ps;
    ps.emplace_back("patch_embed.weight", &w_patch_);
    ps.emplace_back("patch_embed.bias", &b_patch_);
    ps.emplace_back("pos_embed", &pos_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string base = "layers." + std::to_string(l) + ".";
        auto& lp = layers_[l];
        ps.emplace_back(base + "attn.w_q", &lp.attn.w_q);
        for (std::size_t g = 0; g < lp.attn.w_k.size(); ++g)
            ps.emplace_back(base + "attn.w_k." + std::to_string(g), &lp.attn.w_k[g]);
        for (std::size_t g = 0; g < lp.attn.w_v.size(); ++g)
            ps.emplace_back(base + "attn.w_v." + std::to_string(g), &lp.attn.w_v[g]);
        ps.emplace_back(base + "attn.w_o", &lp.attn.w_o);
        ps.emplace_back(base + "norm_attn.gamma", &lp.gamma_attn);
        ps.emplace_back(base + "ffn.w1", &lp.w_f1);
        ps.emplace_back(base + "ffn.b1", &lp.b_f1);
        ps.emplace_back(base + "ffn.w2", &lp.w_f2);
        ps.emplace_back(base + "ffn.b2", &lp.b_f2);
        ps.emplace_back(base + "norm_ffn.gamma", &lp.gamma_ffn);
    }
    ps.emplace_back("head.weight", &w_head_);
    ps.emplace_back("head.bias", &b_head_);
    return ps;
}

template <typename Real>
std::vector<Tensor<Real>*> Forecaster<Real>::parameters() {
    std::vector<Tensor<Real>*> ps;
    for (auto& [name, t] : named_parameters()) ps.push_back(t);
    return ps;
}

template <typename Real>
void Forecaster<Real>::zero_grad() {
    for (Tensor<Real>* p : parameters()) p->zero_grad();
}

template <typename Real>
std::vector<std::vector<Real>> Forecaster<Real>::snapshot() const {
    std::vector<std::vector<Real>> snap;
    for (Tensor<Real>* p : const_cast<Forecaster*>(this)->parameters()) snap.push_back(p->values());
    return snap;
}

template <typename Real>
void Forecaster<Real>::restore(const std::vector<std::vector<Real>>& snap) {
    auto ps = parameters();
    if (snap.size() != ps.size()) throw NumericError("snapshot size mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->values() = snap[i];
}

// ---------------------------------------------------------------------------

template std::pair<Tensor<float>, RevinState> revin_normalize<float>(const Tensor<float>&, double);
template std::pair<Tensor<double>, RevinState> revin_normalize<double>(const Tensor<double>&,
                                                                       double);
template Tensor<float> revin_denormalize<float>(const Tensor<float>&, const RevinState&);
template Tensor<double> revin_denormalize<double>(const Tensor<double>&, const RevinState&);
template Tensor<float> patchify<float>(const Tensor<float>&, long, long);
template Tensor<double> patchify<double>(const Tensor<double>&, long, long);
template Tensor<float> mse_loss<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_loss<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> add_rowvec<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> add_rowvec<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> encoder_layer<float>(const Tensor<float>&, const EncoderLayerParams<float>&,
                                            const std::vector<Tensor<float>>&, float,
                                            AttentionCapture<float>*);
template Tensor<double> encoder_layer<double>(const Tensor<double>&,
                                              const EncoderLayerParams<double>&,
                                              const std::vector<Tensor<double>>&, double,
                                              AttentionCapture<double>*);
template class Forecaster<float>;
template class Forecaster<double>;

}  // namespace penguin
