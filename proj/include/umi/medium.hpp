#pragma once

#include <optional>
#include <vector>

#include "umi/common.hpp"
#include "umi/probe.hpp"
#include "umi/rng.hpp"

namespace umi {

struct PointScatterer {
  Vec3 position{};   // mm
  cdouble reflectivity{1.0, 0.0};
};

/// Box filled with unresolved scatterers at a given density per
/// diffraction-limited resolution cell; amplitudes are circular complex
/// Gaussian with the given RMS.
struct SpeckleRegion {
  Vec3 lo{};
  Vec3 hi{};
  double density_per_cell = 4.0;
  double rms_amplitude = 1.0;
};

struct MediumDescription {
  std::vector<PointScatterer> scatterers;
  std::vector<SpeckleRegion> speckle_regions;
  double c0 = 1.54;  // mm/us

  bool empty() const { return scatterers.empty() && speckle_regions.empty(); }
};

/// Draws the speckle scatterers of every region (deterministic in rng).
/// Cell volume is evaluated from the probe at the region's mid depth.
std::vector<PointScatterer> realize_speckle(const MediumDescription& medium,
                                            const ProbeModel& probe,
                                            const Rng& rng);

/// Thin transmittance layer a(u) * exp(i phi(u)) at plane z, sampled on a
/// regular lateral grid; bilinear lookup in between.
struct PhaseScreen {
  double z = 0.0;      // mm
  double x0 = 0.0, y0 = 0.0;
  double pitch = 0.5;  // mm
  int nx = 0, ny = 0;
  std::vector<float> phase;            // radians
  std::vector<float> amplitude;        // empty means a == 1

  void validate() const;
  /// Transmittance at lateral point (x, y); outside the sampled grid the
  /// nearest edge value is used.
  cdouble transmittance(double x, double y) const;
  /// Phase only, same lookup.
  double phase_at(double x, double y) const;
};

/// Smooth Gaussian-correlated random phase screen: zero-mean, the given
/// RMS, correlation length corr_mm (Gaussian kernel width).
PhaseScreen make_random_screen(double z_mm, double half_extent_mm, double pitch_mm,
                               double rms_rad, double corr_mm, const Rng& rng);

/// Two uncorrelated random screens glued at x = 0 (left/right halves).
PhaseScreen make_split_screen(double z_mm, double half_extent_mm, double pitch_mm,
                              double rms_left, double rms_right, double corr_mm,
                              const Rng& rng);

}  // namespace umi
