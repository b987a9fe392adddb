#pragma once

#include "cmo/core_types.hpp"
#include "cmo/evaluation.hpp"
#include "cmo/solver.hpp"
#include "cmo/synth.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace cmo::io {

namespace fs = std::filesystem;

inline constexpr std::array<char, 8> kMatrixMagic{'C', 'M', 'O', 'M', 'A', 'T', '0', '1'};
inline constexpr std::array<char, 8> kModelMagic{'C', 'M', 'O', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

enum class MatrixFormat { Text, Binary };

std::string to_string(MatrixFormat f);
MatrixFormat matrix_format_from_string(const std::string& name);

// Text: one row per line, entries separated by whitespace or commas, printed with
// 17 significant digits. Binary: 8-byte magic, uint32 P, then P*P little-endian doubles.
void write_matrix_text(const fs::path& path, const Matrix& m);
Matrix read_matrix_text(const fs::path& path);
void write_matrix_binary(const fs::path& path, const Matrix& m);
Matrix read_matrix_binary(const fs::path& path);
Matrix read_matrix(const fs::path& path);  // dispatches on the magic bytes

struct CohortSaveOptions {
    MatrixFormat format = MatrixFormat::Text;
    bool residualized = false;  // recorded in the manifest; load_cohort then skips residualization
    std::string config_echo = "{}";
};

struct CohortLoadOptions {
    bool residualize = true;
    bool check_psd = true;
};

/// Directory container: `manifest` (JSON) plus one matrix file per patient.
void save_cohort(const fs::path& dir, const CohortDataset& cohort,
                 const CohortSaveOptions& options = {});
CohortDataset load_cohort(const fs::path& dir, const CohortLoadOptions& options = {});

void save_ground_truth(const fs::path& dir, const GroundTruth& truth,
                       const std::string& config_echo = "{}");

/// Model file: magic, uint32 version, uint32 P, R, N, basis (row-major), anchors
/// (row-major), alpha, kernel spec, hyperparameters, fit summary, then the config echo
/// as uint32 length + bytes. Reals are little-endian doubles.
void save_model(const fs::path& path, const FittedModel& model,
                const std::string& config_echo = "{}");
FittedModel load_model(const fs::path& path, std::string* config_echo = nullptr);

// Delimited text reports; every file starts with "# config: <json>" then a header row.
void write_trace_csv(const fs::path& path, const FitTrace& trace, const std::string& config_echo);
void write_report_csv(const fs::path& path, const EvalReport& report,
                      const std::string& config_echo);
void write_predictions_csv(const fs::path& path, const EvalReport& report,
                           const std::string& config_echo);
void write_sweep_csv(const fs::path& path, const std::vector<SweepEntry>& entries,
                     const std::string& config_echo);

/// Reads a delimited report back as rows of fields, skipping '#' comments.
std::vector<std::vector<std::string>> read_csv(const fs::path& path);

}  // namespace cmo::io
