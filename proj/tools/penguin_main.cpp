// Command line front end: data synthesis, training, evaluation, forecasting,
// bias inspection, gradient checking, period detection and ablation sweeps.
//
// Exit codes: 0 success, 1 numeric/assertion failure, 2 data error,
// 3 config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "penguin/attention.hpp"
#include "penguin/bias.hpp"
#include "penguin/checkpoint.hpp"
#include "penguin/data.hpp"
#include "penguin/errors.hpp"
#include "penguin/model.hpp"
#include "penguin/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace penguin;

namespace {

// ---------------------------------------------------------------------------
// run-config file
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string csv_path;
    SplitRatios split;
    bool normalize = true;
    bool allow_empty_splits = false;
    PenguinConfig model;
    bool has_model = false;
    TrainConfig train;
    std::string out_checkpoint;
    std::string out_history;
    std::string out_manifest;
};

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

RunConfig parse_run_config(const std::string& path, bool need_train, bool need_model) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown_keys(j, {"data", "model", "train", "out"}, "config root");

    RunConfig rc;
    try {
        if (!j.contains("data")) throw ConfigError("missing 'data' section");
        const json& d = j.at("data");
        reject_unknown_keys(d, {"csv", "split", "normalize", "allow_empty_splits"}, "'data'");
        rc.csv_path = d.at("csv").get<std::string>();
        if (d.contains("split")) {
            auto v = d.at("split").get<std::vector<double>>();
            if (v.size() != 3) throw ConfigError("'data.split' must have three ratios");
            rc.split = {v[0], v[1], v[2]};
        }
        if (d.contains("normalize")) rc.normalize = d.at("normalize").get<bool>();
        if (d.contains("allow_empty_splits"))
            rc.allow_empty_splits = d.at("allow_empty_splits").get<bool>();

        if (j.contains("model")) {
            rc.model = config_from_json_string(j.at("model").dump(), /*reject_unknown=*/true);
            rc.has_model = true;
        } else if (need_model) {
            throw ConfigError("missing 'model' section");
        }

        if (j.contains("train")) {
            const json& t = j.at("train");
            reject_unknown_keys(t,
                                {"lr", "batch_size", "max_epochs", "patience", "seed", "beta1",
                                 "beta2", "eps_opt", "max_steps_per_epoch"},
                                "'train'");
            if (t.contains("lr")) rc.train.lr = t.at("lr").get<double>();
            if (t.contains("batch_size")) rc.train.batch_size = t.at("batch_size").get<long>();
            if (t.contains("max_epochs")) rc.train.max_epochs = t.at("max_epochs").get<long>();
            if (t.contains("patience")) rc.train.patience = t.at("patience").get<long>();
            if (t.contains("seed")) rc.train.seed = t.at("seed").get<std::uint64_t>();
            if (t.contains("beta1")) rc.train.beta1 = t.at("beta1").get<double>();
            if (t.contains("beta2")) rc.train.beta2 = t.at("beta2").get<double>();
            if (t.contains("eps_opt")) rc.train.eps_opt = t.at("eps_opt").get<double>();
            if (t.contains("max_steps_per_epoch"))
                rc.train.max_steps_per_epoch = t.at("max_steps_per_epoch").get<long>();
        } else if (need_train) {
            throw ConfigError("missing 'train' section");
        }

        if (j.contains("out")) {
            const json& o = j.at("out");
            reject_unknown_keys(o, {"checkpoint", "history", "manifest"}, "'out'");
            if (o.contains("checkpoint")) rc.out_checkpoint = o.at("checkpoint").get<std::string>();
            if (o.contains("history")) rc.out_history = o.at("history").get<std::string>();
            if (o.contains("manifest")) rc.out_manifest = o.at("manifest").get<std::string>();
        }
        if (need_train && rc.out_checkpoint.empty())
            throw ConfigError("missing 'out.checkpoint' path");

        // reject bad values before any file is touched
        const double ratio_sum = rc.split.train + rc.split.val + rc.split.test;
        if (rc.split.train < 0 || rc.split.val < 0 || rc.split.test < 0)
            throw ConfigError("split ratios must be non-negative");
        if (ratio_sum > 1.0 + 1e-12) throw ConfigError("split ratios sum to more than 1");
        if (need_train) rc.train.validate();

        // channels are derived from the csv; an explicit value must agree later
        if (j.contains("model") && j.at("model").contains("channels"))
            rc.model.channels = j.at("model").at("channels").get<long>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return rc;
}

struct LoadedData {
    SeriesTable table;
    DataNorm norm;
    SplitResult split;
};

LoadedData load_and_split(const RunConfig& rc, long min_rows, const DataNorm* fixed_norm) {
    LoadedData ld;
    ld.table = load_csv(rc.csv_path);
    ld.split = chronological_split(ld.table, rc.split, min_rows, rc.allow_empty_splits);
    if (fixed_norm != nullptr) {
        ld.norm = *fixed_norm;
    } else if (rc.normalize) {
        ld.norm = fit_norm(ld.split.train);
    }
    if (ld.norm.enabled) {
        apply_norm(ld.split.train, ld.norm);
        apply_norm(ld.split.val, ld.norm);
        apply_norm(ld.split.test, ld.norm);
    }
    return ld;
}

std::vector<long> parse_long_list(const std::string& csv) {
    std::vector<long> out;
    if (csv.empty()) return out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stol(tok));
        } catch (...) {
            throw ConfigError("'" + tok + "' is not an integer");
        }
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    if (csv.empty()) return out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (...) {
            throw ConfigError("'" + tok + "' is not a number");
        }
    }
    return out;
}

void write_matrix_csv(const std::vector<double>& v, long rows, long cols,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    char buf[64];
    for (long i = 0; i < rows; ++i) {
        for (long j = 0; j < cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", v[static_cast<std::size_t>(i * cols + j)]);
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out_path, long length, long channels, const std::string& periods,
              const std::string& amplitudes, const std::string& phases, double trend, double noise,
              std::uint64_t seed) {
    const std::vector<long> ps = parse_long_list(periods);
    const std::vector<double> amps = parse_double_list(amplitudes);
    const std::vector<double> phs = parse_double_list(phases);
    std::vector<SynthComponent> comps;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        SynthComponent c;
        c.period = ps[i];
        c.amplitude = i < amps.size() ? amps[i] : 1.0;
        c.phase = i < phs.size() ? phs[i] : 0.0;
        comps.push_back(c);
    }
    SeriesTable t = synth_series(length, channels, comps, trend, noise, seed);
    write_csv(t, out_path);
    std::cout << "wrote " << t.rows << "x" << t.cols << " series to " << out_path << "\n";
    return 0;
}

template <typename Real>
int run_train(const RunConfig& rc_in) {
    RunConfig rc = rc_in;
    LoadedData ld = load_and_split(rc, rc.model.lookback + rc.model.horizon, nullptr);
    if (rc.model.channels != 1 && rc.model.channels != ld.table.cols)
        throw ConfigError("config channels " + std::to_string(rc.model.channels) +
                          " does not match csv channels " + std::to_string(ld.table.cols));
    rc.model.channels = ld.table.cols;
    rc.model.validate();
    rc.train.validate();

    WindowedDataset train_ds = make_windows(std::move(ld.split.train), rc.model.lookback, rc.model.horizon);
    WindowedDataset val_ds = make_windows(std::move(ld.split.val), rc.model.lookback, rc.model.horizon);

    Forecaster<Real> model(rc.model, rc.train.seed);
    TrainResult result = train_model(model, train_ds, val_ds, rc.train);

    Checkpoint ckpt = checkpoint_from_model(model, ld.norm);
    save_checkpoint(ckpt, rc.out_checkpoint);
    if (!rc.out_history.empty()) write_history_csv(result, rc.out_history);
    if (!rc.out_manifest.empty()) write_run_manifest(rc.out_manifest, rc.model, rc.train);

    std::cout << "epochs " << result.history.size() << ", best val mse " << result.best_val_mse
              << ", checkpoint " << rc.out_checkpoint << "\n";
    if (result.diverged)
        throw NumericError("training diverged; last finite checkpoint written to " +
                           rc.out_checkpoint);
    return 0;
}

int cmd_train(const std::string& config_path) {
    RunConfig rc = parse_run_config(config_path, /*need_train=*/true, /*need_model=*/true);
    if (rc.model.precision == Precision::F64) return run_train<double>(rc);
    return run_train<float>(rc);
}

template <typename Real>
int run_eval(const RunConfig& rc, const Checkpoint& ckpt, const std::string& out_path) {
    // only the test split needs to be windowable; make_windows validates it
    LoadedData ld = load_and_split(rc, 0, &ckpt.norm);
    if (ld.table.cols != ckpt.config.channels)
        throw DataError("csv has " + std::to_string(ld.table.cols) + " channels, checkpoint has " +
                        std::to_string(ckpt.config.channels));
    WindowedDataset test_ds = make_windows(std::move(ld.split.test), ckpt.config.lookback,
                                           ckpt.config.horizon);
    Forecaster<Real> model(ckpt.config, 0);
    load_into_model(ckpt, model);
    EvalReport rep = evaluate(model, test_ds);
    const std::string text = eval_report_to_json(rep);
    if (!out_path.empty()) {
        write_eval_report_json(rep, out_path);
    }
    std::cout << text << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& out_path) {
    RunConfig rc = parse_run_config(config_path, /*need_train=*/false, /*need_model=*/false);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (ckpt.config.precision == Precision::F64) return run_eval<double>(rc, ckpt, out_path);
    return run_eval<float>(rc, ckpt, out_path);
}

template <typename Real>
int run_forecast(const Checkpoint& ckpt, const std::string& input_path,
                 const std::string& out_path, const std::string& attn_dir) {
    SeriesTable t = load_csv(input_path);
    if (t.cols != ckpt.config.channels)
        throw DataError("input has " + std::to_string(t.cols) + " channels, checkpoint has " +
                        std::to_string(ckpt.config.channels));
    const long L = ckpt.config.lookback;
    if (t.rows < L)
        throw DataError("input has " + std::to_string(t.rows) + " rows, needs at least " +
                        std::to_string(L));
    apply_norm(t, ckpt.norm);

    Forecaster<Real> model(ckpt.config, 0);
    load_into_model(ckpt, model);

    // last L rows form the look-back window
    std::vector<double> window(t.values.end() - L * t.cols, t.values.end());
    AttentionCapture<Real> capture;
    std::vector<double> pred =
        model.predict(window.data(), attn_dir.empty() ? nullptr : &capture);

    SeriesTable out;
    out.rows = ckpt.config.horizon;
    out.cols = t.cols;
    out.channel_names = t.channel_names;
    out.values = std::move(pred);
    for (long r = 0; r < out.rows; ++r)
        denorm_row(out.values.data() + r * out.cols, out.cols, ckpt.norm);
    write_csv(out, out_path);

    if (!attn_dir.empty()) {
        fs::create_directories(attn_dir);
        const auto& stack = model.bias_stack();
        for (std::size_t h = 0; h < capture.head_weights.size(); ++h) {
            std::vector<double> w(capture.head_weights[h].begin(), capture.head_weights[h].end());
            const std::string name = "head" + std::to_string(stack[h].head) + "_group" +
                                     std::to_string(stack[h].group) + ".csv";
            write_matrix_csv(w, capture.n_tokens, capture.n_tokens,
                             (fs::path(attn_dir) / name).string());
        }
        std::cout << "attention weights in " << attn_dir << "\n";
    }
    std::cout << "wrote " << out.rows << "x" << out.cols << " forecast to " << out_path << "\n";
    return 0;
}

int cmd_forecast(const std::string& ckpt_path, const std::string& input_path,
                 const std::string& out_path, const std::string& attn_dir) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (ckpt.config.precision == Precision::F64)
        return run_forecast<double>(ckpt, input_path, out_path, attn_dir);
    return run_forecast<float>(ckpt, input_path, out_path, attn_dir);
}

int cmd_dump_bias(long n, const std::string& periods, const std::string& regime_name_str,
                  long heads, const std::string& format, long decoder_offset,
                  const std::string& out_dir) {
    if (format != "csv" && format != "pgm")
        throw ConfigError("format must be csv or pgm, got '" + format + "'");
    const BiasRegime regime = parse_regime(regime_name_str);
    // periods are given in patch tokens here (stride already applied)
    PeriodSet ps = PeriodSet::from_raw(parse_long_list(periods), 1);
    auto stack = assemble_bias_stack(heads, regime, ps, n, decoder_offset);
    fs::create_directories(out_dir);
    for (const auto& hb : stack) {
        const std::string base = "head" + std::to_string(hb.head) + "_group" +
                                 std::to_string(hb.group) + "." + format;
        const std::string path = (fs::path(out_dir) / base).string();
        if (format == "csv")
            write_bias_csv(hb.mat, path);
        else
            write_bias_pgm(hb.mat, path);
    }
    std::cout << "wrote " << stack.size() << " bias matrices to " << out_dir << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& config_path, std::uint64_t seed,
                  const std::string& corrupt_block) {
    PenguinConfig tiny = gradcheck_tiny_config();
    if (!config_path.empty()) {
        RunConfig rc = parse_run_config(config_path, /*need_train=*/false, /*need_model=*/true);
        // sizes are forced; only the bias setup is taken from the config
        tiny.regime = rc.model.regime;
        tiny.periods = rc.model.periods;
        tiny.causal = rc.model.causal;
    }
    tiny.validate();
    GradCheckReport rep = run_gradcheck(tiny, seed, 1e-5, corrupt_block);
    for (const auto& b : rep.blocks) {
        std::printf("%-24s entries %5ld  max_rel_err %.3e  %s\n", b.name.c_str(), b.entries,
                    b.max_rel_err, b.max_rel_err < 1e-4 ? "ok" : "FAIL");
    }
    std::printf("gradcheck worst %.3e: %s\n", rep.worst, rep.pass() ? "PASS" : "FAIL");
    if (!rep.pass()) throw NumericError("gradient check failed");
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& regimes_csv,
               const std::string& seeds_csv, const std::string& out_dir) {
    RunConfig rc = parse_run_config(config_path, /*need_train=*/true, /*need_model=*/true);
    LoadedData ld = load_and_split(rc, rc.model.lookback + rc.model.horizon, nullptr);
    rc.model.channels = ld.table.cols;

    WindowedDataset train_ds = make_windows(std::move(ld.split.train), rc.model.lookback, rc.model.horizon);
    WindowedDataset val_ds = make_windows(std::move(ld.split.val), rc.model.lookback, rc.model.horizon);
    WindowedDataset test_ds = make_windows(std::move(ld.split.test), rc.model.lookback, rc.model.horizon);

    std::vector<AblationCell> cells;
    std::stringstream ss(regimes_csv);
    std::string tok;
    std::vector<std::string> regimes;
    while (std::getline(ss, tok, ',')) regimes.push_back(tok);
    if (regimes.empty()) throw ConfigError("no regimes given");
    std::vector<long> seeds = parse_long_list(seeds_csv);
    if (seeds.empty()) seeds = {1, 2, 3};
    for (const auto& rname : regimes) {
        const BiasRegime regime = parse_regime(rname);
        for (long s : seeds) {
            AblationCell cell;
            cell.label = rname;
            cell.regime = regime;
            cell.periods = (regime == BiasRegime::Periodic || regime == BiasRegime::Both)
                               ? rc.model.periods
                               : std::vector<long>{};
            cell.seed = static_cast<std::uint64_t>(s);
            cells.push_back(cell);
        }
    }

    auto rows = ablation_sweep(rc.model, rc.train, train_ds, val_ds, test_ds, cells,
                               worker_threads_from_env());
    fs::create_directories(out_dir);
    write_ablation_csv(rows, (fs::path(out_dir) / "cells.csv").string());
    write_ablation_summary_csv(rows, (fs::path(out_dir) / "summary.csv").string());
    std::cout << "wrote " << rows.size() << " cells to " << out_dir << "\n";
    return 0;
}

int cmd_detect_periods(const std::string& input_path, long column, long max_lag, long top_k,
                       const std::string& out_path) {
    SeriesTable t = load_csv(input_path);
    if (column < 0 || column >= t.cols)
        throw ConfigError("column " + std::to_string(column) + " out of range (csv has " +
                          std::to_string(t.cols) + ")");
    if (max_lag <= 0) max_lag = std::min<long>(t.rows / 2, 512);
    std::vector<double> chan(static_cast<std::size_t>(t.rows));
    for (long r = 0; r < t.rows; ++r) chan[static_cast<std::size_t>(r)] = t.at(r, column);
    auto hits = detect_periods_acf(chan.data(), t.rows, max_lag, top_k);
    json j = json::array();
    for (const auto& h : hits) j.push_back({{"lag", h.lag}, {"correlation", h.correlation}});
    const std::string text = j.dump(2);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw DataError("cannot open '" + out_path + "' for writing");
        out << text << "\n";
    }
    std::cout << text << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"periodic-nested group attention forecaster"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic periodic series CSV");
    std::string synth_out = "synth.csv", synth_periods = "24", synth_amps, synth_phases;
    long synth_len = 2000, synth_channels = 1;
    double synth_trend = 0.0, synth_noise = 0.1;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out, "output CSV path");
    synth->add_option("--length", synth_len, "number of rows");
    synth->add_option("--channels", synth_channels, "number of channels");
    synth->add_option("--periods", synth_periods, "comma-separated component periods");
    synth->add_option("--amplitudes", synth_amps, "per-component amplitudes (default 1)");
    synth->add_option("--phases", synth_phases, "per-component phases (default 0)");
    synth->add_option("--trend", synth_trend, "linear trend slope");
    synth->add_option("--noise", synth_noise, "gaussian noise sigma");
    synth->add_option("--seed", synth_seed, "rng seed");

    // train
    auto* train = app.add_subcommand("train", "train a forecaster from a JSON run config");
    std::string train_config;
    train->add_option("--config", train_config, "run config JSON")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string eval_config, eval_ckpt, eval_out;
    eval->add_option("--config", eval_config, "run config JSON")->required();
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--out", eval_out, "write the report JSON here too");

    // forecast
    auto* fc = app.add_subcommand("forecast", "predict the horizon following an input CSV");
    std::string fc_ckpt, fc_input, fc_out = "forecast.csv", fc_attn;
    fc->add_option("--checkpoint", fc_ckpt, "checkpoint path")->required();
    fc->add_option("--input", fc_input, "input CSV with at least lookback rows")->required();
    fc->add_option("--out", fc_out, "output CSV path");
    fc->add_option("--attn-out", fc_attn, "directory for per-head attention weight CSVs");

    // dump-bias
    auto* dump = app.add_subcommand("dump-bias", "materialize per-head bias matrices");
    long dump_n = 42, dump_heads = 12, dump_offset = 0;
    std::string dump_periods, dump_regime = "both", dump_format = "csv", dump_out = "bias";
    dump->add_option("--n", dump_n, "token count N");
    dump->add_option("--periods", dump_periods, "comma-separated patched periods");
    dump->add_option("--regime", dump_regime, "nobias|nonperiodic|periodic|both");
    dump->add_option("--heads", dump_heads, "head count");
    dump->add_option("--format", dump_format, "csv|pgm");
    dump->add_option("--decoder-offset", dump_offset, "decoder-side key offset");
    dump->add_option("--out", dump_out, "output directory");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of the gradients");
    std::string gc_config, gc_corrupt;
    std::uint64_t gc_seed = 7;
    gc->add_option("--config", gc_config, "run config JSON (bias setup only; sizes are forced)");
    gc->add_option("--seed", gc_seed, "rng seed");
    gc->add_option("--corrupt", gc_corrupt, "corrupt this block's gradient (negative control)")
        ->group("");  // hidden

    // ablate
    auto* ab = app.add_subcommand("ablate", "train one model per regime x seed and compare");
    std::string ab_config, ab_regimes = "nobias,nonperiodic,both", ab_seeds = "1,2,3",
                ab_out = "ablation";
    ab->add_option("--config", ab_config, "run config JSON")->required();
    ab->add_option("--regimes", ab_regimes, "comma-separated regimes");
    ab->add_option("--seeds", ab_seeds, "comma-separated seeds");
    ab->add_option("--out", ab_out, "output directory");

    // detect-periods
    auto* dp = app.add_subcommand("detect-periods", "ACF-based period detection");
    std::string dp_input, dp_out;
    long dp_col = 0, dp_maxlag = 0, dp_topk = 5;
    dp->add_option("--input", dp_input, "input CSV")->required();
    dp->add_option("--column", dp_col, "channel column index");
    dp->add_option("--max-lag", dp_maxlag, "maximum lag (default min(T/2,512))");
    dp->add_option("--top-k", dp_topk, "number of periods to report");
    dp->add_option("--out", dp_out, "write the report JSON here too");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 3;
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_out, synth_len, synth_channels, synth_periods, synth_amps,
                             synth_phases, synth_trend, synth_noise, synth_seed);
        if (train->parsed()) return cmd_train(train_config);
        if (eval->parsed()) return cmd_eval(eval_config, eval_ckpt, eval_out);
        if (fc->parsed()) return cmd_forecast(fc_ckpt, fc_input, fc_out, fc_attn);
        if (dump->parsed())
            return cmd_dump_bias(dump_n, dump_periods, dump_regime, dump_heads, dump_format,
                                 dump_offset, dump_out);
        if (gc->parsed()) return cmd_gradcheck(gc_config, gc_seed, gc_corrupt);
        if (ab->parsed()) return cmd_ablate(ab_config, ab_regimes, ab_seeds, ab_out);
        if (dp->parsed()) return cmd_detect_periods(dp_input, dp_col, dp_maxlag, dp_topk, dp_out);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
