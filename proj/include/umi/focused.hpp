#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "umi/grid.hpp"
#include "umi/raw.hpp"
#include "umi/rng.hpp"

namespace umi {

/// Lattice of input-output transverse offsets with |offset| <= dmax.
struct OffsetTable {
  double pitch = 0.5;
  double dmax = 10.0;
  int radius = 0;  // lattice steps
  std::vector<std::pair<std::int16_t, std::int16_t>> steps;  // (dx, dy)
  std::vector<int> reverse;  // dense (dy+R)*(2R+1)+(dx+R) -> index or -1
  int zero_index = -1;

  static OffsetTable build(double pitch, double dmax);
  int count() const { return static_cast<int>(steps.size()); }
  Vec2 offset_mm(int oi) const {
    return {steps[oi].first * pitch, steps[oi].second * pitch};
  }
  int index_of(int dx, int dy) const {
    if (std::abs(dx) > radius || std::abs(dy) > radius) return -1;
    return reverse[(dy + radius) * (2 * radius + 1) + (dx + radius)];
  }
  int mirror_index(int oi) const {
    return index_of(-steps[oi].first, -steps[oi].second);
  }
};

enum class OutputRep : std::uint8_t { Transducer = 0, Fourier = 1 };

/// Receive-side representation the beamformer works in. For Fourier, the
/// element traces are projected once onto a receive angle grid at the
/// carrier frequency.
struct ReceiveRep {
  OutputRep rep = OutputRep::Transducer;
  std::vector<Vec2> angles;  // Fourier only
  std::shared_ptr<const std::vector<cfloat>> transformed;  // (i, theta, t)
  int channel_count(const ProbeModel& probe) const {
    return rep == OutputRep::Transducer ? probe.element_count()
                                        : static_cast<int>(angles.size());
  }
};

struct BeamformSettings {
  VoxelGrid grid;
  double dmax_mm = 10.0;
  OutputRep out_rep = OutputRep::Transducer;
  int fourier_downsample = 1;      // decimation of the receive angle grid
  std::vector<Vec2> fourier_angles;  // explicit override of the angle grid
  int threads = 0;
};

/// Emulated-linear-array geometry (collimated in x on a focus line).
struct LinearEmulation {
  double x_f = 0.0;   // mm
  double z_f = 30.0;  // mm
};

/// Per-voxel, per-channel unit-modulus correction laws on a transverse
/// lattice (one table per depth plane). Empty tables mean a flat law.
/// Lookup is by position; points beyond the lattice take the edge value.
struct LawField {
  int n_channels = 0;
  double x0 = 0, y0 = 0, pitch = 0.5;
  int nx = 0, ny = 0;
  std::vector<std::vector<cfloat>> tables;  // per depth: vox * n_channels

  bool flat() const { return tables.empty(); }
  cdouble value(int zi, double x_mm, double y_mm, int ch) const {
    if (flat()) return {1.0, 0.0};
    int ix = std::clamp(static_cast<int>(std::lround((x_mm - x0) / pitch)), 0, nx - 1);
    int iy = std::clamp(static_cast<int>(std::lround((y_mm - y0) / pitch)), 0, ny - 1);
    return cdouble(tables[zi][(static_cast<std::size_t>(iy) * nx + ix) * n_channels + ch]);
  }
};

struct BeamformDiagnostics {
  std::size_t uncovered_points = 0;  // focal points with an empty cone
  double aliasing_bound_mm = 0.0;    // lambda_c / (2 dtheta), plane-wave input
  bool aliasing_risk = false;        // dmax exceeds the bound
};

/// Focused reflection matrix: per depth, R(rho_in, rho_out = rho_in + off)
/// for every grid voxel and offset. Carries what is needed to re-beamform
/// itself with a correction law.
struct FocusedRMatrix {
  VoxelGrid grid;
  OffsetTable offsets;
  ProbeModel probe;
  double fc = 3.0;  // MHz
  double c0 = 1.54; // mm/us
  std::vector<std::vector<cfloat>> blocks;  // per depth: vox * n_offsets

  // Provenance for re-beamforming and for file round-trips.
  std::shared_ptr<const ReflectionMatrixRaw> raw;
  ReceiveRep receive;
  BeamformSettings settings;
  std::string raw_path;  // where the raw matrix lives on disk, if anywhere
  LawField law_in;       // accumulated corrections already applied
  LawField law_out;
  std::shared_ptr<const LinearEmulation> linear;  // set for 2D emulations

  int n_offsets() const { return offsets.count(); }
  int n_depths() const { return static_cast<int>(grid.z.size()); }
  cfloat at(int zi, int vox, int oi) const {
    return blocks[zi][static_cast<std::size_t>(vox) * offsets.count() + oi];
  }
  cfloat& at(int zi, int vox, int oi) {
    return blocks[zi][static_cast<std::size_t>(vox) * offsets.count() + oi];
  }
  /// Slot holding R(rho_out, rho_in) for the pair at (vox, oi), or
  /// (-1, -1) when rho_out lies outside the grid.
  std::pair<int, int> transpose_slot(int vox, int oi) const;

  double drho0(int zi) const { return diffraction_limit(probe, grid.z[zi]); }
  void validate() const;
};

struct ConfocalVolume {
  VoxelGrid grid;
  std::vector<std::vector<float>> intensity;  // per depth: vox

  float at(int zi, int vox) const { return intensity[zi][vox]; }
};

/// I = |diag R|^2.
ConfocalVolume confocal(const FocusedRMatrix& f);

/// Adds a reciprocal (symmetric) random matrix with the given per-entry
/// power to every depth block; the multiple-scattering surrogate.
void inject_symmetric_background(FocusedRMatrix& f, double per_entry_power,
                                 std::uint64_t seed);

/// Adds an i.i.d. (non-reciprocal) random matrix; the electronic-noise
/// surrogate.
void inject_noise_background(FocusedRMatrix& f, double per_entry_power,
                             std::uint64_t seed);

/// Gaussian confocal filter exp(-|off|^2 / (2 lc(z)^2)); diagonal unchanged.
FocusedRMatrix confocal_filter(const FocusedRMatrix& f,
                               const std::function<double(double)>& lc_of_z);

/// The adaptive variant with lc(z) = scale * drho0(z).
FocusedRMatrix adaptive_confocal_filter(const FocusedRMatrix& f, double scale = 3.0);

}  // namespace umi
