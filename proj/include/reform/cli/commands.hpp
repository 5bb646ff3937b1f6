#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "reform/common/error.hpp"
#include "reform/envs/dataset.hpp"
#include "reform/trainer/trainer.hpp"

namespace reform::cli {

// Process exit status for each failure category. 1 is reserved for a failed
// audit, 0 for success.
int exit_code(ErrorKind kind) noexcept;
inline constexpr int kAuditFailed = 1;

struct GenDataOptions {
  std::string env;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

envs::TransitionBatch gen_data(const GenDataOptions& opt, std::ostream& out);

struct TrainOptions {
  std::filesystem::path config;
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> steps;
};

// Config with the command-line overrides applied.
trainer::TrainConfig resolve_config(const TrainOptions& opt);
trainer::RunArtifacts train(const TrainOptions& opt, std::ostream& out);

struct EvalOptions {
  std::filesystem::path run;
  std::size_t episodes = 32;
  std::uint64_t seed = 0;
  // Optional directory for returns.csv and samples.csv.
  std::filesystem::path out;
};

trainer::EvalResult eval(const EvalOptions& opt, std::ostream& out);

struct AuditReport {
  std::size_t samples = 0;
  double max_norm = 0.0;
  std::size_t max_norm_row = 0;
  // Empty for variants whose latent is unbounded.
  std::optional<double> bound;
  // Rows whose latent norm exceeds bound * (1 + 1e-12).
  std::vector<std::size_t> violations;
  double clip_rate = 0.0;

  bool latent_ok() const { return violations.empty(); }
  bool clip_ok() const { return clip_rate < 1e-3; }
  bool pass() const { return latent_ok() && clip_ok(); }
};

// Reads config.txt, samples.csv and metrics.csv from a run directory.
AuditReport audit(const std::filesystem::path& run);
void print_audit(const AuditReport& report, std::ostream& out);

// Scatter of actions and latents with the latent ball and action box.
std::string render_svg(const trainer::SampleDump& dump, double radius);

struct VizOutputs {
  std::filesystem::path svg;
  std::filesystem::path csv;
};

// Writes <out>.svg and <out>.csv (any extension on `out` is replaced).
VizOutputs viz(const std::filesystem::path& run, const std::filesystem::path& out,
               std::ostream& log);

struct SweepOptions {
  std::filesystem::path config;
  std::filesystem::path data;
  std::filesystem::path out;
  std::vector<std::string> variants;
  std::vector<double> xis;
  std::vector<double> alphas;
  // Empty means the config's radius.
  std::vector<double> radii;
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::size_t> steps;
  std::size_t jobs = 1;
};

struct SweepRow {
  std::string variant;
  std::optional<double> radius;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  double final_return = 0.0;
  double clip_rate = 0.0;
  double coverage_low = 0.0;
  double coverage_high = 0.0;
};

// Every variant x radius x seed combination as an independent training run
// under <out>/<variant>[-r<radius>]/seed-<seed>; rows come back in grid
// order and are also written to <out>/summary.csv.
std::vector<SweepRow> sweep(const SweepOptions& opt, std::ostream& out);
std::string format_sweep(const std::vector<SweepRow>& rows);

}  // namespace reform::cli
