#pragma once

#include <optional>

#include "umi/config.hpp"
#include "umi/io.hpp"
#include "umi/rpsf.hpp"
#include "umi/simulate.hpp"

namespace umi {

struct StageTiming {
  std::string name;
  double seconds = 0.0;
  std::size_t bytes = 0;
  double cost_units = 0.0;  // kernel work estimate where meaningful
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunReport {
  std::vector<StageTiming> timings;
  std::vector<std::string> artifacts;
  std::vector<CheckResult> checks;
  std::string failed_stage;  // empty on success

  bool all_passed() const;
  std::string to_text() const;
};

/// Config-driven end-to-end run: simulate, beamform, analyze, correct,
/// re-analyze, export, check. Every artifact lands in out_dir; the report
/// is also written there as report.txt. Deterministic in the seed.
RunReport run_pipeline(const Config& cfg, const std::string& out_dir,
                       std::optional<std::uint64_t> seed_override = {},
                       int threads_override = -1);

/// Re-exports artifacts of a finished run. what is one of
/// {confocal, rpsf, phase_laws, metrics, all}. Missing artifacts are
/// reported in *missing and skipped.
void export_maps(const std::string& run_dir, const std::string& what,
                 const std::string& out_dir, std::vector<std::string>* missing);

// Config -> domain object builders (shared by the CLI verbs).
ProbeModel probe_from_config(const Config& cfg);
MediumDescription medium_from_config(const Config& cfg);
std::optional<PhaseScreen> screen_from_config(const Config& cfg,
                                              std::uint64_t seed);
IlluminationBasis basis_from_config(const Config& cfg, const ProbeModel& probe);
SimulateOptions simulate_options_from_config(const Config& cfg, int threads);
BeamformSettings beamform_settings_from_config(const Config& cfg, int threads);
std::vector<SpatialWindow> windows_from_config(const std::string& spec,
                                               const VoxelGrid& grid,
                                               const ProbeModel& probe);

/// Metrics rows for a window list: one line per window with
/// r_p, drho_3db, contrast, alpha_s, alpha_m, alpha_n, beta, coherence.
std::string rpsf_metrics_table(const RpsfStack& stack);

/// Offset maps of an RPSF stack, binary container "UMP1".
void write_rpsf_maps(const RpsfStack& stack, const std::string& path);

}  // namespace umi
