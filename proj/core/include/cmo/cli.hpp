#pragma once

#include "cmo/core_types.hpp"
#include "cmo/errors.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace cmo::cli {

/// Flat run configuration. Config files and `--key value` overrides use the field
/// names below, with nested settings prefixed (tr_, synth_, grid_).
struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 1;  // 0 = one per hardware thread

    std::string cohort;  // input cohort directory
    std::string out = "out";
    std::string model;   // model file for predict
    bool residualize = true;
    bool check_psd = true;
    std::string matrix_format = "text";
    std::string score_name = "score";
    std::string method = "cmo";  // cv: cmo | decoupled

    Hyperparams hp;
    int rank = 0;  // 0 = knee of the mean spectrum
    KernelSpec kernel;

    Index synth_p = 30;
    Index synth_r = 4;
    Index synth_n = 40;
    double synth_sparsity_x = 0.2;
    double synth_loading_scale = 1.0;
    double synth_noise_sigma = 0.01;
    double synth_score_noise_sigma = 0.0;
    Index synth_anchor_count = 10;
    double synth_alpha_scale = 1.0;

    int folds = 10;
    int mi_bins = 8;

    std::vector<double> grid_lambda;
    std::vector<double> grid_gamma1;
    std::vector<double> grid_gamma2;
    std::vector<double> grid_gamma3;
    std::vector<double> grid_sigma_sq;
    std::vector<double> grid_rho;
    std::vector<double> grid_ell;
};

std::vector<std::string> config_keys();

/// Parses a JSON object of config keys. Unknown keys and type mismatches throw Parse.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Sets one key from its command-line text. Lists accept JSON arrays or comma lists.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Compact JSON with sorted keys; embedded in every artifact.
std::string config_echo(const RunConfig& cfg);

int exit_code(ErrorKind kind) noexcept;

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> names{"synth", "fit", "predict", "cv", "sweep"};
    return names;
}

/// Runs one subcommand and returns the process exit status. Failures print a
/// one-line JSON record {"error", "kind", "exit_code"} to `err`.
int run_command(const std::string& command, const RunConfig& cfg, std::ostream& log,
                std::ostream& err);

/// Loads `config_path` (if nonempty), applies the overrides in order, then runs.
int run_cli(const std::string& command, const std::string& config_path,
            const std::vector<std::pair<std::string, std::string>>& overrides, std::ostream& log,
            std::ostream& err);

}  // namespace cmo::cli
