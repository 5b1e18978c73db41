#pragma once

#include <optional>

#include "umi/focused.hpp"

namespace umi {

/// Window-averaged reflection point spread function on the offset lattice.
struct RpsfMap {
  SpatialWindow window;
  OffsetTable offsets;
  std::vector<double> mean_intensity;  // per offset
  std::vector<int> counts;
  double drho0 = 0.0;  // diffraction limit at the window depth

  double peak() const { return mean_intensity[offsets.zero_index]; }
  double amplitude(int oi) const { return std::sqrt(mean_intensity[oi]); }
};

/// <RPSF>(off) = mean over pair midpoints inside the window of
/// |R(mid - off/2, mid + off/2)|^2. Rejects windows holding fewer than 4
/// resolution cells.
RpsfMap local_rpsf_window(const FocusedRMatrix& f, const SpatialWindow& w);
std::vector<RpsfMap> local_rpsf(const FocusedRMatrix& f,
                                const std::vector<SpatialWindow>& windows);

struct ResolutionEstimate {
  double radius_mm = 0.0;  // sqrt(area / pi) of the half-max amplitude region
  bool resolved = false;
};

/// -3 dB transverse resolution from the amplitude map (area above half the
/// peak amplitude). Unresolved when the background reaches half maximum or
/// the peak is off-center.
ResolutionEstimate resolution(const RpsfMap& map, int upsample = 4);

struct ScatteringMetrics {
  double rpsf0 = 0.0;     // confocal intensity
  double background = 0.0;  // I_B over the de-scanned annulus
  double single = 0.0;      // I_S = rpsf0 - I_B
  double contrast = 0.0;    // I_S / I_B
  double beta = 0.0;        // symmetry degree over the annulus
  double alpha_s = 0.0, alpha_m = 0.0, alpha_n = 0.0;
};

/// Single / multiple / noise decomposition over the annulus
/// 6 drho0 < |off| <= min(dmax, 10 drho0). With paper_convention the
/// split is alpha_m = beta I_B / rpsf0; otherwise the noise-calibrated
/// variant alpha_m = max(0, 2 beta - 1) I_B / rpsf0 is used, which makes
/// pure i.i.d. noise (beta = 1/2) report alpha_m = 0.
ScatteringMetrics scattering_rates(const FocusedRMatrix& f, const SpatialWindow& w,
                                   bool paper_convention = false);

struct WindowMetrics {
  SpatialWindow window;
  ResolutionEstimate res;
  std::optional<ScatteringMetrics> scattering;  // absent when dmax < 6 drho0
  double coherence = -1.0;                      // filled by callers with laws
};

struct RpsfStack {
  std::vector<RpsfMap> maps;
  std::vector<WindowMetrics> metrics;
};

/// Maps plus metrics for every window; windows that fail a precondition
/// are skipped (not included).
RpsfStack analyze_windows(const FocusedRMatrix& f,
                          const std::vector<SpatialWindow>& windows,
                          bool paper_convention = false);

}  // namespace umi
