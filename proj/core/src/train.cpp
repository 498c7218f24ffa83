#include "penguin/train.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "penguin/attention.hpp"
#include "penguin/checkpoint.hpp"
#include "penguin/errors.hpp"
#include "penguin/rng.hpp"

namespace penguin {

using Clock = std::chrono::steady_clock;

namespace {

double ms_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

double median(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Kahan {
    double sum = 0, c = 0;
    void add(double x) {
        const double y = x - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

// one Adam slot per parameter tensor
template <typename Real>
struct AdamState {
    std::vector<std::vector<double>> m, v;
    long t = 0;

    explicit AdamState(const std::vector<Tensor<Real>*>& params) {
        for (auto* p : params) {
            m.emplace_back(p->values().size(), 0.0);
            v.emplace_back(p->values().size(), 0.0);
        }
    }

    void step(const std::vector<Tensor<Real>*>& params, const TrainConfig& tc) {
        ++t;
        const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& val = params[i]->values();
            const auto& grad = params[i]->grad();
            auto& mi = m[i];
            auto& vi = v[i];
            for (std::size_t k = 0; k < val.size(); ++k) {
                const double g = static_cast<double>(grad[k]);
                mi[k] = tc.beta1 * mi[k] + (1.0 - tc.beta1) * g;
                vi[k] = tc.beta2 * vi[k] + (1.0 - tc.beta2) * g * g;
                const double update =
                    tc.lr * (mi[k] / bc1) / (std::sqrt(vi[k] / bc2) + tc.eps_opt);
                val[k] = static_cast<Real>(static_cast<double>(val[k]) - update);
            }
        }
    }
};

}  // namespace

void TrainConfig::validate() const {
    if (lr < 0) throw ConfigError("learning rate must be >= 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (patience > max_epochs) throw ConfigError("patience must not exceed max epochs");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
        throw ConfigError("adam betas must lie in (0,1)");
    if (eps_opt <= 0) throw ConfigError("optimizer eps must be positive");
    if (max_steps_per_epoch < 0) throw ConfigError("max steps per epoch must be >= 0");
}

template <typename Real>
TrainResult train_model(Forecaster<Real>& model, const WindowedDataset& train_ds,
                        const WindowedDataset& val_ds, const TrainConfig& tc) {
    tc.validate();
    if (train_ds.count() < 1) throw DataError("train split has no windows");
    if (val_ds.count() < 1) throw DataError("validation split has no windows");

    TrainResult result;
    Rng rng(tc.seed);
    std::vector<long> order(static_cast<std::size_t>(train_ds.count()));
    for (long i = 0; i < train_ds.count(); ++i) order[static_cast<std::size_t>(i)] = i;

    auto params = model.parameters();
    AdamState<Real> adam(params);
    std::vector<std::vector<Real>> best = model.snapshot();
    std::vector<double> step_times;
    long bad_epochs = 0;

    for (long epoch = 0; epoch < tc.max_epochs; ++epoch) {
        rng.shuffle(order);
        long steps = (train_ds.count() + tc.batch_size - 1) / tc.batch_size;
        if (tc.max_steps_per_epoch > 0) steps = std::min(steps, tc.max_steps_per_epoch);

        double loss_acc = 0;
        double epoch_ms = 0;
        for (long s = 0; s < steps; ++s) {
            std::vector<const double*> inputs, targets;
            for (long k = s * tc.batch_size;
                 k < std::min((s + 1) * tc.batch_size, train_ds.count()); ++k) {
                const long idx = order[static_cast<std::size_t>(k)];
                inputs.push_back(train_ds.input_ptr(idx));
                targets.push_back(train_ds.target_ptr(idx));
            }
            const auto t0 = Clock::now();
            model.zero_grad();
            Tensor<Real> loss = model.loss_batch(inputs, targets);
            const double lv = static_cast<double>(loss.item());
            if (!std::isfinite(lv)) {
                model.restore(best);
                result.diverged = true;
                result.ms_per_step_median = median(step_times);
                return result;
            }
            backward(loss);
            adam.step(params, tc);
            const auto t1 = Clock::now();
            loss_acc += lv;
            epoch_ms += ms_between(t0, t1);
            step_times.push_back(ms_between(t0, t1));
        }

        EvalReport val = evaluate(model, val_ds);
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_acc / static_cast<double>(steps);
        st.val_mse = val.mse;
        st.ms_per_step = epoch_ms / static_cast<double>(steps);
        result.history.push_back(st);

        if (val.mse < result.best_val_mse) {
            result.best_val_mse = val.mse;
            result.best_epoch = epoch;
            best = model.snapshot();
            bad_epochs = 0;
        } else if (++bad_epochs >= tc.patience) {
            break;
        }
    }

    model.restore(best);
    result.ms_per_step_median = median(step_times);
    return result;
}

template <typename Real>
EvalReport evaluate(Forecaster<Real>& model, const WindowedDataset& ds, long eval_batch) {
    if (ds.count() < 1) throw DataError("evaluation split has no windows");
    const long H = model.config().horizon, C = model.config().channels;
    if (ds.channels() != C) throw DataError("dataset channel count does not match model");

    EvalReport rep;
    rep.samples = ds.count();
    std::vector<Kahan> se_h(static_cast<std::size_t>(H)), ae_h(static_cast<std::size_t>(H));
    double total_ms = 0;
    long iters = 0;

    NoGradGuard ng;
    for (long base = 0; base < ds.count(); base += eval_batch) {
        const long nb = std::min(eval_batch, ds.count() - base);
        std::vector<const double*> inputs;
        for (long k = 0; k < nb; ++k) inputs.push_back(ds.input_ptr(base + k));
        const auto t0 = Clock::now();
        Tensor<Real> pred = model.forward_batch(inputs);  // [nb*C, H]
        total_ms += ms_between(t0, Clock::now());
        ++iters;
        const auto& pv = pred.values();
        for (long k = 0; k < nb; ++k) {
            const double* tgt = ds.target_ptr(base + k);  // row-major [H, C]
            for (long c = 0; c < C; ++c)
                for (long t = 0; t < H; ++t) {
                    const double p = static_cast<double>(
                        pv[static_cast<std::size_t>((k * C + c) * H + t)]);
                    const double e = p - tgt[t * C + c];
                    se_h[static_cast<std::size_t>(t)].add(e * e);
                    ae_h[static_cast<std::size_t>(t)].add(std::fabs(e));
                }
        }
    }

    Kahan mse_all, mae_all;
    const double per_h_n = static_cast<double>(rep.samples) * static_cast<double>(C);
    for (long t = 0; t < H; ++t) {
        rep.per_horizon_mse.push_back(se_h[static_cast<std::size_t>(t)].sum / per_h_n);
        rep.per_horizon_mae.push_back(ae_h[static_cast<std::size_t>(t)].sum / per_h_n);
        mse_all.add(se_h[static_cast<std::size_t>(t)].sum);
        mae_all.add(ae_h[static_cast<std::size_t>(t)].sum);
    }
    rep.mse = mse_all.sum / (per_h_n * static_cast<double>(H));
    rep.mae = mae_all.sum / (per_h_n * static_cast<double>(H));
    rep.ms_per_iter = iters > 0 ? total_ms / static_cast<double>(iters) : 0;
    return rep;
}

void write_history_csv(const TrainResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "epoch,train_loss,val_mse,ms_per_step\n";
    char buf[128];
    for (const auto& st : result.history) {
        std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.6g\n", st.epoch, st.train_loss,
                      st.val_mse, st.ms_per_step);
        out << buf;
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

std::string eval_report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["samples"] = report.samples;
    j["mse"] = report.mse;
    j["mae"] = report.mae;
    j["per_horizon_mse"] = report.per_horizon_mse;
    j["per_horizon_mae"] = report.per_horizon_mae;
    j["ms_per_iter"] = report.ms_per_iter;
    return j.dump(2);
}

void write_eval_report_json(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << eval_report_to_json(report) << "\n";
    if (!out) throw DataError("write failed for '" + path + "'");
}

void write_run_manifest(const std::string& path, const PenguinConfig& config,
                        const TrainConfig& tc) {
    nlohmann::json j;
    const std::string cfg = config_to_json_string(config);
    j["config"] = nlohmann::json::parse(cfg);
    j["config_hash"] = fnv1a_hex(cfg);
    j["seed"] = tc.seed;
    j["train"] = {{"lr", tc.lr},
                  {"batch_size", tc.batch_size},
                  {"max_epochs", tc.max_epochs},
                  {"patience", tc.patience},
                  {"beta1", tc.beta1},
                  {"beta2", tc.beta2},
                  {"eps_opt", tc.eps_opt},
                  {"max_steps_per_epoch", tc.max_steps_per_epoch}};
#ifdef PENGUIN_VERSION
    j["version"] = PENGUIN_VERSION;
#else
    j["version"] = "unknown";
#endif
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw DataError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// ablation
// ---------------------------------------------------------------------------

long worker_threads_from_env() {
    const char* env = std::getenv("PENGUIN_THREADS");
    if (env == nullptr) return 1;
    const long v = std::strtol(env, nullptr, 10);
    return v >= 1 ? v : 1;
}

std::vector<AblationRow> ablation_sweep(const PenguinConfig& base, const TrainConfig& tbase,
                                        const WindowedDataset& train_ds,
                                        const WindowedDataset& val_ds,
                                        const WindowedDataset& test_ds,
                                        const std::vector<AblationCell>& cells, long threads) {
    tbase.validate();
    // validate every cell before any worker starts so configuration errors
    // surface in the calling thread
    for (const AblationCell& cell : cells) {
        PenguinConfig cfg = base;
        cfg.regime = cell.regime;
        cfg.periods = cell.periods;
        cfg.causal = cell.causal;
        cfg.validate();
    }

    std::vector<AblationRow> rows(cells.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size() || failed.load()) break;
            try {
                const AblationCell& cell = cells[i];
                PenguinConfig cfg = base;
                cfg.regime = cell.regime;
                cfg.periods = cell.periods;
                cfg.causal = cell.causal;
                TrainConfig tc = tbase;
                tc.seed = cell.seed;

                Forecaster<float> model(cfg, cell.seed);
                TrainResult tr = train_model(model, train_ds, val_ds, tc);
                EvalReport te = evaluate(model, test_ds);

                AblationRow row;
                row.cell = cell;
                row.test_mse = te.mse;
                row.test_mae = te.mae;
                row.val_mse = tr.best_val_mse;
                row.epochs_ran = static_cast<long>(tr.history.size());
                row.ms_per_step = tr.ms_per_step_median;
                row.diverged = tr.diverged;
                rows[i] = row;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true)) first_error = e.what();
            }
        }
    };

    const long n_workers = std::max<long>(1, std::min<long>(threads, static_cast<long>(cells.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (long w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed.load()) throw NumericError("ablation cell failed: " + first_error);
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "label,regime,periods,causal,seed,test_mse,test_mae,val_mse,epochs,ms_per_step,diverged\n";
    char buf[256];
    for (const auto& r : rows) {
        std::string periods;
        for (std::size_t i = 0; i < r.cell.periods.size(); ++i)
            periods += (i ? ";" : "") + std::to_string(r.cell.periods[i]);
        std::snprintf(buf, sizeof(buf), ",%s,%s,%d,%llu,%.10g,%.10g,%.10g,%ld,%.6g,%d\n",
                      regime_name(r.cell.regime).c_str(), periods.c_str(), r.cell.causal ? 1 : 0,
                      static_cast<unsigned long long>(r.cell.seed), r.test_mse, r.test_mae,
                      r.val_mse, r.epochs_ran, r.ms_per_step, r.diverged ? 1 : 0);
        out << r.cell.label << buf;
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

void write_ablation_summary_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::vector<std::string> labels;
    for (const auto& r : rows)
        if (std::find(labels.begin(), labels.end(), r.cell.label) == labels.end())
            labels.push_back(r.cell.label);

    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "label,cells,test_mse_mean,test_mse_sd,test_mse_median,test_mae_mean,ms_per_step_median\n";
    char buf[256];
    for (const auto& label : labels) {
        std::vector<double> mses, maes, times;
        for (const auto& r : rows)
            if (r.cell.label == label) {
                mses.push_back(r.test_mse);
                maes.push_back(r.test_mae);
                times.push_back(r.ms_per_step);
            }
        const double n = static_cast<double>(mses.size());
        double mean = 0, mae_mean = 0;
        for (double x : mses) mean += x;
        mean /= n;
        for (double x : maes) mae_mean += x;
        mae_mean /= n;
        double var = 0;
        for (double x : mses) var += (x - mean) * (x - mean);
        var = mses.size() > 1 ? var / (n - 1) : 0;
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.10g,%.10g,%.10g,%.10g,%.6g\n", label.c_str(),
                      mses.size(), mean, std::sqrt(var), median(mses), mae_mean, median(times));
        out << buf;
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// attention step timing
// ---------------------------------------------------------------------------

namespace {

template <typename Params>
double time_attention_steps(const Tensor<float>& x, Params& params,
                            const std::vector<Tensor<float>>& bias, long iters,
                            const TrainConfig& tc,
                            Tensor<float> (*attn)(const Tensor<float>&, const Params&,
                                                  const std::vector<Tensor<float>>&,
                                                  AttentionCapture<float>*)) {
    auto ps = params.parameters();
    AdamState<float> adam(ps);
    std::vector<double> times;
    const long warmup = 3;
    for (long it = 0; it < iters + warmup; ++it) {
        const auto t0 = Clock::now();
        for (auto* p : ps) p->zero_grad();
        Tensor<float> out = attn(x, params, bias, nullptr);
        Tensor<float> loss = mean(mul(out, out));
        backward(loss);
        adam.step(ps, tc);
        const auto t1 = Clock::now();
        if (it >= warmup) times.push_back(ms_between(t0, t1));
    }
    return median(times);
}

}  // namespace

StepTiming measure_attention_step_time(long n_tokens, long d, long heads, long groups, long batch,
                                       long iters, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> xv(static_cast<std::size_t>(batch * n_tokens * d));
    for (auto& v : xv) v = static_cast<float>(rng.normal(0.0, 1.0));
    Tensor<float> x = Tensor<float>::from({batch, n_tokens, d}, std::move(xv));

    PeriodSet ps = PeriodSet::from_raw({}, 1);
    auto stack = assemble_bias_stack(heads, BiasRegime::NonPeriodic, ps, n_tokens);
    const Mask mask = causal_mask(n_tokens, n_tokens);
    auto bias = make_head_bias_tensors<float>(stack, &mask);

    TrainConfig tc;
    tc.lr = 1e-3;

    Tape<float> tape_gqa;
    auto gqa = AttentionParams<float>::init(d, heads, groups, rng, &tape_gqa);
    Tape<float> tape_mha;
    auto mha = MhaParams<float>::replicate_from(gqa, &tape_mha);

    StepTiming timing;
    timing.mha_ms = time_attention_steps<MhaParams<float>>(x, mha, bias, iters, tc,
                                                           &mha_reference<float>);
    timing.gqa_ms = time_attention_steps<AttentionParams<float>>(x, gqa, bias, iters, tc,
                                                                 &penguin_attention<float>);
    return timing;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

PenguinConfig gradcheck_tiny_config() {
    PenguinConfig c;
    c.lookback = 16;
    c.horizon = 4;
    c.channels = 2;
    c.patch_len = 4;
    c.stride = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.heads = 4;
    c.layers = 1;
    c.regime = BiasRegime::Both;
    c.periods = {8};
    c.causal = true;
    c.precision = Precision::F64;
    return c;
}

GradCheckReport run_gradcheck(const PenguinConfig& tiny_config, std::uint64_t seed, double fd_step,
                              const std::string& corrupt_block) {
    PenguinConfig cfg = tiny_config;
    cfg.precision = Precision::F64;
    cfg.validate();

    Forecaster<double> model(cfg, seed);
    const long batch = 2;
    SeriesTable synth = synth_series(cfg.lookback + cfg.horizon + batch, cfg.channels,
                                     {{8, 1.0, 0.3}}, 0.01, 0.05, seed + 17);
    WindowedDataset ds = make_windows(std::move(synth), cfg.lookback, cfg.horizon);

    std::vector<const double*> inputs, targets;
    for (long b = 0; b < batch; ++b) {
        inputs.push_back(ds.input_ptr(b));
        targets.push_back(ds.target_ptr(b));
    }

    model.zero_grad();
    Tensor<double> loss = model.loss_batch(inputs, targets);
    backward(loss);

    auto loss_value = [&]() {
        NoGradGuard ng;
        return model.loss_batch(inputs, targets).item();
    };

    GradCheckReport report;
    for (auto& [name, tensor] : model.named_parameters()) {
        GradCheckBlock block;
        block.name = name;
        block.entries = tensor->numel();
        auto& vals = tensor->values();
        const auto& grads = tensor->grad();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + fd_step;
            const double up = loss_value();
            vals[i] = keep - fd_step;
            const double dn = loss_value();
            vals[i] = keep;
            const double fd = (up - dn) / (2.0 * fd_step);
            double analytic = grads[i];
            if (name == corrupt_block) analytic = analytic * 1.5 + 0.05;
            const double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-6});
            block.max_rel_err = std::max(block.max_rel_err, std::fabs(fd - analytic) / denom);
        }
        report.worst = std::max(report.worst, block.max_rel_err);
        report.blocks.push_back(std::move(block));
    }
    return report;
}

template TrainResult train_model<float>(Forecaster<float>&, const WindowedDataset&,
                                        const WindowedDataset&, const TrainConfig&);
template TrainResult train_model<double>(Forecaster<double>&, const WindowedDataset&,
                                         const WindowedDataset&, const TrainConfig&);
template EvalReport evaluate<float>(Forecaster<float>&, const WindowedDataset&, long);
template EvalReport evaluate<double>(Forecaster<double>&, const WindowedDataset&, long);

}  // namespace penguin
