#pragma once

#include <vector>

#include "umi/common.hpp"

namespace umi {

/// 2D matrix-array transducer on a regular lateral grid at z = 0.
/// Positions in mm, frequencies in MHz, c0 in mm/us.
struct ProbeModel {
  std::vector<Vec2> element_positions;  // grid order, y-major
  std::vector<std::uint8_t> element_active;
  double pitch = 0.5;
  Vec2 aperture{};              // (nx, ny) * pitch, inactive rows included
  double center_frequency = 3.0;
  double bandwidth_lo = 1.8;
  double bandwidth_hi = 4.2;
  double directivity_limit = deg_to_rad(28.0);
  double c0 = 1.54;

  int element_count() const { return static_cast<int>(element_positions.size()); }
  int active_count() const;
  double wavelength() const { return c0 / center_frequency; }
  double bandwidth() const { return bandwidth_hi - bandwidth_lo; }

  void validate() const;
};

/// Regular nx-by-ny grid probe centered on the origin. dead lists linear
/// element indices forced inactive. inactive_row_period > 0 inserts
/// `inactive_row_count` skipped rows after every `inactive_row_period`
/// active rows along y (matrix arrays built from stacked blocks).
ProbeModel make_grid_probe(int nx, int ny, double pitch, double fc_mhz,
                           double bw_lo_mhz, double bw_hi_mhz, double c0_mm_us,
                           double theta_max_rad,
                           const std::vector<int>& dead = {},
                           int inactive_row_period = 0,
                           int inactive_row_count = 0);

/// Ideal lateral resolution at depth z:
/// lambda_c / (2 sin(arctan(min(aperture)/2z))).
double diffraction_limit(const ProbeModel& probe, double z_mm);

/// Per-axis variant of the above, for diagnostics.
Vec2 diffraction_limit_xy(const ProbeModel& probe, double z_mm);

/// Pulse-echo axial resolution cell, c0 / (2 * bandwidth).
double axial_resolution(const ProbeModel& probe);

/// Steering limit set by the element pitch: arcsin(lambda_c / (2 pitch)).
double nyquist_directivity(const ProbeModel& probe);

struct IlluminationBasis {
  enum class Kind : std::uint8_t { Transducer = 0, PlaneWave = 1 };
  Kind kind = Kind::Transducer;
  std::vector<Vec2> angles;   // radians, PlaneWave only
  double angular_pitch = 0.0; // radians, PlaneWave only

  int input_count(const ProbeModel& probe) const {
    return kind == Kind::Transducer ? probe.element_count()
                                    : static_cast<int>(angles.size());
  }
  void validate(const ProbeModel& probe) const;
};

/// Full plane-wave grid spanning [-theta_max, theta_max]^2 with pitch
/// arcsin(lambda_c / (2 * aperture_y)).
IlluminationBasis plane_wave_grid(const ProbeModel& probe);

/// Plane-wave grid with an explicit angular pitch.
IlluminationBasis plane_wave_grid_with_pitch(const ProbeModel& probe, double pitch_rad);

/// Keeps every factor-th angle per axis.
IlluminationBasis downsample_angles(const IlluminationBasis& basis, int factor);

}  // namespace umi
