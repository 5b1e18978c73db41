#pragma once

#include <vector>

#include "umi/common.hpp"
#include "umi/probe.hpp"

namespace umi {

/// Gaussian-envelope tone burst; the envelope sigma is set so the pulse
/// spectrum is -6 dB at the probe band edges.
struct PulseModel {
  double fc = 3.0;       // MHz
  double sigma_t = 0.16; // us

  double envelope(double t_us) const {
    return std::exp(-0.5 * (t_us / sigma_t) * (t_us / sigma_t));
  }
  double support() const { return 4.0 * sigma_t; }
};

PulseModel pulse_for(const ProbeModel& probe);

/// Complex baseband echo signals R(i_in, u_out, t). Transducer or
/// plane-wave illumination at input, probe elements at output.
struct ReflectionMatrixRaw {
  ProbeModel probe;
  IlluminationBasis basis_in;
  int n_in = 0;
  int n_out = 0;
  int n_t = 0;
  double fs = 6.0;  // MHz
  double fc = 3.0;  // MHz, demodulation frequency
  double t0 = 0.0;  // us
  std::vector<cfloat> signals;  // (i_in, u_out, t) row-major

  std::size_t index(int i, int u, int t) const {
    return (static_cast<std::size_t>(i) * n_out + u) * n_t + t;
  }
  const cfloat* trace(int i, int u) const { return signals.data() + index(i, u, 0); }
  cfloat* trace(int i, int u) { return signals.data() + index(i, u, 0); }

  void validate() const;
  double mean_power() const;
};

}  // namespace umi
