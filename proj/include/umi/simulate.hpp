#pragma once

#include <cstdint>
#include <optional>

#include "umi/medium.hpp"
#include "umi/raw.hpp"

namespace umi {

struct SimulateOptions {
  double noise_power = 0.0;  // noise variance relative to mean signal power
  double fs = 6.0;           // MHz
  double time_pad = 0.5;     // us added on both ends of the echo window
  std::optional<double> t_start;  // us, overrides the automatic window
  std::optional<double> t_stop;
  int threads = 0;
};

/// Single-scattering forward model: homogeneous Green's legs with straight
/// rays, optional thin phase screen crossed by both legs, hard directivity
/// cutoff with cosine obliquity, additive circular Gaussian noise.
/// Deterministic in (seed) for any thread count.
ReflectionMatrixRaw simulate(const MediumDescription& medium,
                             const PhaseScreen* screen,
                             const ProbeModel& probe,
                             const IlluminationBasis& basis_in,
                             const SimulateOptions& options,
                             std::uint64_t seed);

/// Plane-wave transmit delay over the probe, (ux sin tx + uy sin ty) / c0.
double plane_wave_firing_delay(const Vec2& angle, const Vec2& element, double c0);

/// Synthesizes a plane-wave-basis matrix from a transducer-basis one by
/// delaying and summing the transmit channels. Used as the independent
/// reference for the plane-wave simulation path.
ReflectionMatrixRaw synthesize_plane_waves(const ReflectionMatrixRaw& transducer_raw,
                                           const IlluminationBasis& pw_basis,
                                           int threads = 0);

}  // namespace umi
