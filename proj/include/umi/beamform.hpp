#pragma once

#include <memory>

#include "umi/focused.hpp"

namespace umi {

/// Delay-and-sum projection of a raw matrix onto the focused basis:
/// R(rho_in, rho_out, z) = sum_i sum_u A_in A_out R(i, u, t_in + t_out),
/// with per-leg linear envelope interpolation and exact carrier rotation.
/// Optional law fields fold conjugated per-channel corrections into the
/// transmit/receive weights (flat fields leave the result bit-identical).
FocusedRMatrix beamform(std::shared_ptr<const ReflectionMatrixRaw> raw,
                        const BeamformSettings& settings,
                        BeamformDiagnostics* diagnostics = nullptr,
                        const LawField* law_in = nullptr,
                        const LawField* law_out = nullptr,
                        const ReceiveRep* reuse_receive = nullptr);

/// Single-pass confocal image (coherent compounding on both legs at the
/// same point). Reference path for the diagonal of beamform().
ConfocalVolume confocal_direct(std::shared_ptr<const ReflectionMatrixRaw> raw,
                               const BeamformSettings& settings);

/// Receive representation for the given settings; transforms element
/// traces onto the receive angle grid when out_rep is Fourier.
ReceiveRep prepare_receive_rep(const ReflectionMatrixRaw& raw,
                               const BeamformSettings& settings);

/// Emulated linear array: focused matrix in the (y, z) plane built from
/// plane-wave data with cylindrical delays, collimated in x on the line
/// (x_f, z_f). The result has nx == 1 and offsets along y only.
struct LinearEmulationSettings {
  double x_f = 0.0;   // mm
  double z_f = 30.0;  // mm
  double y0 = -8.0;
  double y_pitch = 0.5;
  int ny = 32;
  std::vector<double> z;
  double dmax_mm = 8.0;
  int threads = 0;
};

FocusedRMatrix emulate_linear_array(std::shared_ptr<const ReflectionMatrixRaw> raw,
                                    const LinearEmulationSettings& settings,
                                    const LawField* law_in = nullptr,
                                    const LawField* law_out = nullptr);

/// Distinct transmit theta_y values / receive u_y values of an emulated
/// linear array, with the member channel indices that share each value.
struct ChannelGroups {
  std::vector<double> values;              // coordinate per group
  std::vector<std::vector<int>> members;   // raw channel indices
};
ChannelGroups group_plane_wave_theta_y(const ReflectionMatrixRaw& raw);
ChannelGroups group_elements_u_y(const ProbeModel& probe);

}  // namespace umi
