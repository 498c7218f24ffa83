#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "penguin/data.hpp"
#include "penguin/model.hpp"

namespace penguin {

struct TrainConfig {
    double lr = 1e-3;
    long batch_size = 32;
    long max_epochs = 30;
    long patience = 5;  // early stop on validation MSE
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_opt = 1e-8;
    long max_steps_per_epoch = 0;  // 0 = full pass

    void validate() const;
};

struct EpochStats {
    long epoch = 0;
    double train_loss = 0;
    double val_mse = 0;
    double ms_per_step = 0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    long best_epoch = -1;
    double best_val_mse = std::numeric_limits<double>::infinity();
    bool diverged = false;
    double ms_per_step_median = 0;
};

// Adaptive-moment descent on the squared-error objective with per-epoch
// validation; the best-validation parameters are restored on return. A
// non-finite loss aborts training and restores the last finite snapshot.
template <typename Real>
TrainResult train_model(Forecaster<Real>& model, const WindowedDataset& train_ds,
                        const WindowedDataset& val_ds, const TrainConfig& tc);

struct EvalReport {
    long samples = 0;
    double mse = 0;
    double mae = 0;
    std::vector<double> per_horizon_mse;
    std::vector<double> per_horizon_mae;
    double ms_per_iter = 0;
};

// Fully averaged MSE/MAE over samples x horizon x channels, compensated
// summation so the result is order independent.
template <typename Real>
EvalReport evaluate(Forecaster<Real>& model, const WindowedDataset& ds, long eval_batch = 64);

void write_history_csv(const TrainResult& result, const std::string& path);
void write_eval_report_json(const EvalReport& report, const std::string& path);
std::string eval_report_to_json(const EvalReport& report);

// run manifest: config hash, seed, version, scaled settings
void write_run_manifest(const std::string& path, const PenguinConfig& config,
                        const TrainConfig& tc);

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

struct AblationCell {
    std::string label;
    BiasRegime regime = BiasRegime::NoBias;
    std::vector<long> periods;
    bool causal = true;
    std::uint64_t seed = 1;
};

struct AblationRow {
    AblationCell cell;
    double test_mse = 0;
    double test_mae = 0;
    double val_mse = 0;
    long epochs_ran = 0;
    double ms_per_step = 0;
    bool diverged = false;
};

// Trains one model per cell (regime x periods x seed); cells run on up to
// `threads` workers, each with private model state and RNG, so results do not
// depend on scheduling.
std::vector<AblationRow> ablation_sweep(const PenguinConfig& base, const TrainConfig& tbase,
                                        const WindowedDataset& train_ds,
                                        const WindowedDataset& val_ds,
                                        const WindowedDataset& test_ds,
                                        const std::vector<AblationCell>& cells, long threads = 1);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);
// per-(label) mean and standard deviation of the test metrics
void write_ablation_summary_csv(const std::vector<AblationRow>& rows, const std::string& path);

// PENGUIN_THREADS, else 1
long worker_threads_from_env();

// ---------------------------------------------------------------------------
// Timing comparison: grouped vs dense multi-head attention, identical
// replicated weights, forward+backward+step per iteration, median wall time.
// ---------------------------------------------------------------------------

struct StepTiming {
    double gqa_ms = 0;
    double mha_ms = 0;
};

StepTiming measure_attention_step_time(long n_tokens, long d, long heads, long groups, long batch,
                                       long iters, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Finite-difference gradient audit over every parameter block of a tiny
// model. corrupt_block, when set, scales that block's analytic gradient and
// must make the audit fail (negative control).
// ---------------------------------------------------------------------------

struct GradCheckBlock {
    std::string name;
    double max_rel_err = 0;
    long entries = 0;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double worst = 0;

    bool pass(double tol = 1e-4) const { return worst < tol; }
};

GradCheckReport run_gradcheck(const PenguinConfig& tiny_config, std::uint64_t seed,
                              double fd_step = 1e-5, const std::string& corrupt_block = "");

// the forced tiny geometry used by the gradcheck command
PenguinConfig gradcheck_tiny_config();

}  // namespace penguin
