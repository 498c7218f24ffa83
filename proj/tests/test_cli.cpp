// End-to-end exercises of the command line tool. The binary path comes from
// the PENGUIN_CLI environment variable set by ctest.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>
#include <sstream>
#include <string>

#include "penguin/data.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

std::string cli_path() {
    const char* p = std::getenv("PENGUIN_CLI");
    REQUIRE_MESSAGE(p != nullptr, "PENGUIN_CLI must point at the penguin binary");
    return p;
}

RunResult run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>&1";
    std::FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("penguin_cli_test_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

}  // namespace

TEST_CASE("synth is deterministic and periodic") {
    TempDir dir;
    const std::string a = dir / "a.csv", b = dir / "b.csv";
    CHECK(run_cli("synth --out " + a + " --length 200 --periods 24 --noise 0 --seed 7").exit_code ==
          0);
    CHECK(run_cli("synth --out " + b + " --length 200 --periods 24 --noise 0 --seed 7").exit_code ==
          0);
    CHECK(slurp(a) == slurp(b));

    penguin::SeriesTable t = penguin::load_csv(a);
    for (long i = 0; i + 24 < t.rows; ++i)
        CHECK(t.at(i, 0) == doctest::Approx(t.at(i + 24, 0)).epsilon(1e-9));
}

TEST_CASE("detect-periods matches the brute-force acf oracle") {
    TempDir dir;

    // single dominant component: the true period is the top hit
    const std::string one = dir / "one.csv";
    REQUIRE(run_cli("synth --out " + one + " --length 2000 --periods 24 --noise 0.05 --seed 3")
                .exit_code == 0);
    RunResult r1 = run_cli("detect-periods --input " + one + " --max-lag 120 --top-k 8");
    CHECK(r1.exit_code == 0);
    CHECK(r1.output.find("\"lag\": 24") != std::string::npos);

    // two components superpose; hits must be exactly the oracle's local
    // maxima of the compound acf (which peak at compromise lags, not at the
    // raw component periods)
    const std::string two = dir / "two.csv";
    REQUIRE(run_cli("synth --out " + two + " --length 2000 --periods 24,56 --noise 0.05 --seed 3")
                .exit_code == 0);
    RunResult r2 = run_cli("detect-periods --input " + two + " --max-lag 120 --top-k 8");
    CHECK(r2.exit_code == 0);

    penguin::SeriesTable t = penguin::load_csv(two);
    std::vector<double> chan(t.values.begin(), t.values.end());
    auto r = oracles::acf_naive(chan, 120);
    std::vector<long> expect;
    for (long lag = 1; lag + 1 <= 120; ++lag)
        if (r[lag] >= 0.1 && r[lag] > r[lag - 1] && r[lag] >= r[lag + 1]) expect.push_back(lag);
    REQUIRE_FALSE(expect.empty());
    for (long lag : expect)
        CHECK(r2.output.find("\"lag\": " + std::to_string(lag)) != std::string::npos);
}

TEST_CASE("dump-bias writes one file per head with group structure") {
    TempDir dir;
    const std::string out = dir / "bias";
    RunResult r = run_cli("dump-bias --n 42 --periods 3,21 --regime both --heads 12 --format csv --out " +
                          out);
    CHECK(r.exit_code == 0);
    long files = 0, g1 = 0, g2 = 0, g3 = 0;
    for (const auto& e : fs::directory_iterator(out)) {
        ++files;
        const std::string name = e.path().filename().string();
        if (name.find("group1") != std::string::npos) ++g1;
        if (name.find("group2") != std::string::npos) ++g2;
        if (name.find("group3") != std::string::npos) ++g3;
    }
    CHECK(files == 12);
    CHECK(g1 == 4);
    CHECK(g2 == 4);
    CHECK(g3 == 4);

    // nobias dumps are all zeros
    const std::string zout = dir / "zeros";
    REQUIRE(run_cli("dump-bias --n 6 --regime nobias --heads 4 --format csv --out " + zout)
                .exit_code == 0);
    std::ifstream in(zout + "/head1_group1.csv");
    std::string line;
    while (std::getline(in, line)) CHECK(line == "0,0,0,0,0,0");

    // decoder offset follows the shifted-distance rule
    const std::string dout = dir / "dec";
    REQUIRE(run_cli("dump-bias --n 3 --regime nonperiodic --heads 1 --decoder-offset 3 "
                    "--format csv --out " + dout).exit_code == 0);
    std::ifstream din(dout + "/head1_group1.csv");
    REQUIRE(std::getline(din, line));
    // row 0, slope 2^-8: entries -m*|0+3-j| for j=0,1,2
    const double m = 0.00390625;
    std::stringstream ss(line);
    std::string cell;
    for (long j = 0; std::getline(ss, cell, ','); ++j)
        CHECK(std::stod(cell) == doctest::Approx(-m * (3 - j)).epsilon(1e-12));

    // pgm format carries the raw header
    const std::string pout = dir / "pgm";
    REQUIRE(run_cli("dump-bias --n 8 --regime nonperiodic --heads 2 --format pgm --out " + pout)
                .exit_code == 0);
    const std::string pgm = slurp(pout + "/head2_group1.pgm");
    CHECK(pgm.substr(0, 2) == "P5");

    // invalid combinations exit with the config code
    CHECK(run_cli("dump-bias --n 8 --regime periodic --heads 2 --out " + dir / "x").exit_code == 3);
    // three periods give four groups, which does not divide six heads
    CHECK(run_cli("dump-bias --n 8 --regime both --periods 3,4,5 --heads 6 --out " + dir / "y")
              .exit_code == 3);
}

TEST_CASE("train, eval, forecast pipeline") {
    TempDir dir;
    const std::string csv = dir / "series.csv";
    REQUIRE(run_cli("synth --out " + csv + " --length 400 --periods 24 --noise 0.2 --seed 11")
                .exit_code == 0);

    const std::string ckpt = dir / "model.pngn";
    const std::string config = dir / "run.json";
    write_file(config, R"({
  "data": {"csv": ")" + csv + R"(", "split": [0.6, 0.2, 0.2], "normalize": true},
  "model": {"lookback": 32, "horizon": 8, "patch_len": 8, "stride": 4,
            "d_model": 16, "d_ff": 32, "heads": 4, "layers": 1,
            "regime": "both", "periods": [24], "causal": true, "precision": "f32"},
  "train": {"lr": 0.002, "batch_size": 16, "max_epochs": 3, "patience": 3, "seed": 5},
  "out": {"checkpoint": ")" + ckpt + R"(", "history": ")" + dir / "history.csv" + R"(",
          "manifest": ")" + dir / "manifest.json" + R"("}
})");

    RunResult tr = run_cli("train --config " + config);
    CHECK(tr.exit_code == 0);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(dir / "history.csv"));
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(slurp(dir / "manifest.json").find("config_hash") != std::string::npos);

    RunResult ev = run_cli("eval --config " + config + " --checkpoint " + ckpt);
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find("\"mse\"") != std::string::npos);

    // forecast: output must be horizon x channels, idempotent per input
    const std::string fc1 = dir / "fc1.csv", fc2 = dir / "fc2.csv";
    RunResult f1 = run_cli("forecast --checkpoint " + ckpt + " --input " + csv + " --out " + fc1);
    CHECK(f1.exit_code == 0);
    penguin::SeriesTable fc = penguin::load_csv(fc1);
    CHECK(fc.rows == 8);
    CHECK(fc.cols == 1);
    REQUIRE(run_cli("forecast --checkpoint " + ckpt + " --input " + csv + " --out " + fc2)
                .exit_code == 0);
    CHECK(slurp(fc1) == slurp(fc2));

    // attention export writes one matrix per head
    const std::string attn = dir / "attn";
    REQUIRE(run_cli("forecast --checkpoint " + ckpt + " --input " + csv + " --out " + fc2 +
                    " --attn-out " + attn).exit_code == 0);
    long head_files = 0;
    for (const auto& e : fs::directory_iterator(attn)) {
        ++head_files;
        (void)e;
    }
    CHECK(head_files == 4);

    // too-short forecast input is a data error
    const std::string tiny = dir / "short.csv";
    REQUIRE(run_cli("synth --out " + tiny + " --length 10 --periods 5 --seed 1").exit_code == 0);
    CHECK(run_cli("forecast --checkpoint " + ckpt + " --input " + tiny + " --out " + fc2)
              .exit_code == 2);

    // retraining with the same seed reproduces the checkpoint byte for byte
    const std::string first = slurp(ckpt);
    REQUIRE(run_cli("train --config " + config).exit_code == 0);
    CHECK(slurp(ckpt) == first);
}

TEST_CASE("training in double precision works end to end") {
    TempDir dir;
    const std::string csv = dir / "series.csv";
    REQUIRE(run_cli("synth --out " + csv + " --length 300 --periods 12 --noise 0.1 --seed 4")
                .exit_code == 0);
    const std::string ckpt = dir / "m64.pngn";
    const std::string config = dir / "run64.json";
    write_file(config, R"({
  "data": {"csv": ")" + csv + R"(", "split": [0.6, 0.2, 0.2]},
  "model": {"lookback": 24, "horizon": 6, "patch_len": 6, "stride": 3, "d_model": 8,
            "d_ff": 16, "heads": 2, "layers": 1, "regime": "periodic", "periods": [12],
            "precision": "f64"},
  "train": {"lr": 0.002, "batch_size": 16, "max_epochs": 2, "patience": 2, "seed": 6},
  "out": {"checkpoint": ")" + ckpt + R"("}
})");
    REQUIRE(run_cli("train --config " + config).exit_code == 0);
    RunResult ev = run_cli("eval --config " + config + " --checkpoint " + ckpt);
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find("\"mse\"") != std::string::npos);
}

TEST_CASE("eval on an empty test split exits with the data code") {
    TempDir dir;
    const std::string csv = dir / "series.csv";
    REQUIRE(run_cli("synth --out " + csv + " --length 300 --periods 24 --noise 0.2 --seed 2")
                .exit_code == 0);
    const std::string ckpt = dir / "m.pngn";
    const std::string train_cfg = dir / "train.json";
    write_file(train_cfg, R"({
  "data": {"csv": ")" + csv + R"(", "split": [0.6, 0.2, 0.2]},
  "model": {"lookback": 32, "horizon": 8, "patch_len": 8, "stride": 4, "d_model": 16,
            "d_ff": 32, "heads": 4, "layers": 1, "regime": "nobias"},
  "train": {"lr": 0.002, "batch_size": 16, "max_epochs": 1, "patience": 1, "seed": 5},
  "out": {"checkpoint": ")" + ckpt + R"("}
})");
    REQUIRE(run_cli("train --config " + train_cfg).exit_code == 0);

    const std::string empty_cfg = dir / "empty.json";
    write_file(empty_cfg, R"({
  "data": {"csv": ")" + csv + R"(", "split": [0.8, 0.2, 0.0], "allow_empty_splits": true}
})");
    RunResult r = run_cli("eval --config " + empty_cfg + " --checkpoint " + ckpt);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("data:") != std::string::npos);
}

TEST_CASE("config schema violations exit with the config code before any work") {
    TempDir dir;
    const std::string cfg = dir / "bad.json";
    write_file(cfg, R"({"data": {"csv": "x.csv"}, "model": {}, "train": {}, "sneaky": 1,
                        "out": {"checkpoint": "m.pngn"}})");
    RunResult r = run_cli("train --config " + cfg);
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("config:") != std::string::npos);
    CHECK(r.output.find("sneaky") != std::string::npos);

    write_file(cfg, R"({"data": {"csv": "x.csv"},
                        "model": {"lookback": 32, "horizen": 8},
                        "train": {}, "out": {"checkpoint": "m.pngn"}})");
    CHECK(run_cli("train --config " + cfg).exit_code == 3);

    write_file(cfg, R"({"data": {"csv": "x.csv", "split": [0.5, 0.6, 0.2]},
                        "model": {"lookback": 32}, "train": {},
                        "out": {"checkpoint": "m.pngn"}})");
    CHECK(run_cli("train --config " + cfg).exit_code == 3);

    CHECK(run_cli("train --config " + dir / "missing.json").exit_code == 3);
}

TEST_CASE("gradcheck passes clean and fails the negative control") {
    CHECK(run_cli("gradcheck --seed 3").exit_code == 0);
    RunResult bad = run_cli("gradcheck --seed 3 --corrupt head.weight");
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("FAIL") != std::string::npos);
}
