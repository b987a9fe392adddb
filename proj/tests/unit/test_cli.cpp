#include "cmo/cli.hpp"
#include "cmo/io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <iterator>
#include <sstream>

using namespace cmo;
using namespace cmo::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("cmo_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

RunConfig small(const fs::path& out) {
    RunConfig cfg;
    cfg.out = out.string();
    cfg.synth_p = 8;
    cfg.synth_r = 2;
    cfg.synth_n = 12;
    cfg.rank = 2;
    cfg.hp.max_outer_iters = 40;
    cfg.folds = 3;
    return cfg;
}

}  // namespace

TEST_CASE("config parsing") {
    const RunConfig c = parse_config(R"({"lambda": 0.5, "rank": 3, "kernel_terms": "poly",
                                         "grid_gamma1": [0.1, 1], "tr_delta0": 0.25, "synth_n": 7})");
    CHECK(c.hp.lambda == 0.5);
    CHECK(c.rank == 3);
    CHECK(c.kernel.terms == KernelTerms::PolynomialOnly);
    CHECK(c.grid_gamma1 == std::vector<double>{0.1, 1.0});
    CHECK(c.hp.tr.delta0 == 0.25);
    CHECK(c.synth_n == 7);

    auto kind = [](const std::function<void()>& f) {
        try {
            f();
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::Io;
    };
    CHECK(kind([] { parse_config(R"({"lamda": 1})"); }) == ErrorKind::Parse);
    CHECK(kind([] { parse_config(R"({"lambda": "x"})"); }) == ErrorKind::Parse);
    CHECK(kind([] { parse_config("[1]"); }) == ErrorKind::Parse);
    CHECK(kind([] { load_config("/nonexistent/cfg.json"); }) == ErrorKind::Io);
}

TEST_CASE("overrides and echo") {
    RunConfig c;
    set_config_key(c, "gamma2", "0.25");
    set_config_key(c, "grid_lambda", "0.1,1,10");
    set_config_key(c, "grid_rho", "[2, 3]");
    set_config_key(c, "residualize", "false");
    CHECK(c.hp.gamma2 == 0.25);
    CHECK(c.grid_lambda == std::vector<double>{0.1, 1.0, 10.0});
    CHECK(c.grid_rho == std::vector<double>{2.0, 3.0});
    CHECK_FALSE(c.residualize);
    CHECK_THROWS_AS(set_config_key(c, "nope", "1"), Error);

    const std::string echo = config_echo(c);
    const auto j = nlohmann::json::parse(echo);
    CHECK(j.size() == config_keys().size());
    const RunConfig back = parse_config(echo);
    CHECK(config_echo(back) == echo);
    CHECK(back.hp == c.hp);
}

TEST_CASE("exit codes are distinct") {
    std::vector<int> codes;
    for (ErrorKind k : {ErrorKind::InvalidArgument, ErrorKind::DimensionMismatch, ErrorKind::Asymmetric,
                        ErrorKind::NotPsd, ErrorKind::NonFinite, ErrorKind::NoKnee, ErrorKind::NumericalFailure,
                        ErrorKind::Diverged, ErrorKind::Parse, ErrorKind::Io})
        codes.push_back(exit_code(k));
    std::vector<int> sorted = codes;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::unique(sorted.begin(), sorted.end()) == sorted.end());
    for (int c : codes) CHECK(c > 1);
}

TEST_CASE("synth, fit, cv, predict and sweep pipeline") {
    TempDir tmp("pipeline");
    RunConfig cfg = small(tmp.path);
    std::ostringstream log, err;
    REQUIRE(run_command("synth", cfg, log, err) == 0);
    CHECK(fs::exists(tmp.path / "cohort" / "manifest"));
    CHECK(fs::exists(tmp.path / "truth" / "true_basis.csv"));

    cfg.cohort = (tmp.path / "cohort").string();
    REQUIRE(run_command("fit", cfg, log, err) == 0);
    for (const char* f : {"model.bin", "trace.csv", "train_predictions.csv"}) CHECK(fs::exists(tmp.path / f));
    const FittedModel model = io::load_model(tmp.path / "model.bin");
    const auto trace = io::read_csv(tmp.path / "trace.csv");
    CHECK(std::stod(trace.back()[6]) == model.summary.final_total_j);

    REQUIRE(run_command("cv", cfg, log, err) == 0);
    CHECK(io::read_csv(tmp.path / "predictions.csv").size() == static_cast<std::size_t>(cfg.synth_n) + 1);
    CHECK(fs::exists(tmp.path / "report.csv"));

    cfg.method = "decoupled";
    REQUIRE(run_command("cv", cfg, log, err) == 0);
    CHECK(io::read_csv(tmp.path / "report.csv")[1][0] == "decoupled");

    cfg.model = (tmp.path / "model.bin").string();
    REQUIRE(run_command("predict", cfg, log, err) == 0);
    CHECK(io::read_csv(tmp.path / "predictions.csv").size() == static_cast<std::size_t>(cfg.synth_n) + 1);

    cfg.grid_lambda = {0.5, 1.0};
    REQUIRE(run_command("sweep", cfg, log, err) == 0);
    CHECK(io::read_csv(tmp.path / "sweep.csv").size() == 3);
    CHECK(err.str().empty());
}

TEST_CASE("artifacts are reproducible byte for byte") {
    // same config, including the output path, run twice
    TempDir tmp("repro");
    const std::vector<std::string> files{"model.bin", "trace.csv", "train_predictions.csv", "report.csv",
                                         "predictions.csv", "cohort/manifest", "cohort/matrix_0000.txt",
                                         "truth/scores.csv"};
    std::vector<std::vector<std::string>> runs;
    for (int run = 0; run < 2; ++run) {
        fs::remove_all(tmp.path);
        fs::create_directories(tmp.path);
        RunConfig cfg = small(tmp.path);
        std::ostringstream log, err;
        REQUIRE(run_command("synth", cfg, log, err) == 0);
        cfg.cohort = (tmp.path / "cohort").string();
        REQUIRE(run_command("fit", cfg, log, err) == 0);
        REQUIRE(run_command("cv", cfg, log, err) == 0);
        std::vector<std::string> contents;
        for (const auto& f : files) contents.push_back(slurp(tmp.path / f));
        runs.push_back(std::move(contents));
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
        INFO(files[i]);
        CHECK_FALSE(runs[0][i].empty());
        CHECK(runs[0][i] == runs[1][i]);
    }
}

TEST_CASE("failures produce a JSON error record and a mapped exit code") {
    TempDir tmp("errors");
    RunConfig cfg = small(tmp.path);
    cfg.cohort = (tmp.path / "missing").string();
    std::ostringstream log, err;
    CHECK(run_command("fit", cfg, log, err) == exit_code(ErrorKind::Io));
    const auto rec = nlohmann::json::parse(err.str());
    CHECK(rec["kind"] == "io_error");
    CHECK(rec["exit_code"] == exit_code(ErrorKind::Io));

    std::ostringstream err2;
    CHECK(run_cli("fit", "", {{"gamma2", "-1"}}, log, err2) != 0);
    std::ostringstream err3;
    CHECK(run_cli("fit", "", {{"no_such_key", "1"}}, log, err3) == exit_code(ErrorKind::InvalidArgument));
    std::ostringstream err4;
    CHECK(run_command("bogus", cfg, log, err4) == exit_code(ErrorKind::InvalidArgument));
}
