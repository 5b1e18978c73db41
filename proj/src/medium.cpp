#include "umi/medium.hpp"

#include <algorithm>
#include <cmath>

#include "umi/grid.hpp"

namespace umi {

std::vector<PointScatterer> realize_speckle(const MediumDescription& medium,
                                            const ProbeModel& probe,
                                            const Rng& rng) {
  std::vector<PointScatterer> out;
  Rng stream = rng.substream("speckle");
  std::uint64_t ctr = 0;
  for (std::size_t ri = 0; ri < medium.speckle_regions.size(); ++ri) {
    const auto& r = medium.speckle_regions[ri];
    Vec3 ext = r.hi - r.lo;
    if (!(ext.x > 0 && ext.y > 0 && ext.z > 0))
      throw ContractError("speckle region has non-positive extent");
    if (!(r.density_per_cell > 0))
      throw ContractError("speckle density must be positive");
    double z_mid = 0.5 * (r.lo.z + r.hi.z);
    double drho0 = diffraction_limit(probe, z_mid);
    double cell = drho0 * drho0 * axial_resolution(probe);
    double volume = ext.x * ext.y * ext.z;
    auto count = static_cast<std::size_t>(std::llround(r.density_per_cell * volume / cell));
    count = std::max<std::size_t>(count, 1);
    out.reserve(out.size() + count);
    for (std::size_t k = 0; k < count; ++k) {
      PointScatterer s;
      s.position = {r.lo.x + ext.x * stream.uniform(ctr),
                    r.lo.y + ext.y * stream.uniform(ctr + 1),
                    r.lo.z + ext.z * stream.uniform(ctr + 2)};
      s.reflectivity = r.rms_amplitude * stream.cgauss(ctr + 3);
      ctr += 5;
      out.push_back(s);
    }
  }
  return out;
}

void PhaseScreen::validate() const {
  if (nx <= 0 || ny <= 0) throw ContractError("phase screen grid is empty");
  if (phase.size() != static_cast<std::size_t>(nx) * ny)
    throw ContractError("phase screen sample count mismatch");
  if (!amplitude.empty()) {
    if (amplitude.size() != phase.size())
      throw ContractError("phase screen amplitude size mismatch");
    for (float a : amplitude)
      if (a < 0.f || a > 1.f) throw ContractError("screen amplitude outside [0,1]");
  }
}

namespace {

template <typename T>
double bilinear(const std::vector<T>& data, int nx, int ny, double fx, double fy) {
  fx = std::clamp(fx, 0.0, static_cast<double>(nx - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(ny - 1));
  int ix = std::min(static_cast<int>(fx), nx - 2 >= 0 ? nx - 2 : 0);
  int iy = std::min(static_cast<int>(fy), ny - 2 >= 0 ? ny - 2 : 0);
  double ax = fx - ix, ay = fy - iy;
  auto at = [&](int i, int j) { return static_cast<double>(data[j * nx + i]); };
  if (nx == 1 && ny == 1) return at(0, 0);
  if (nx == 1) return (1 - ay) * at(0, iy) + ay * at(0, iy + 1);
  if (ny == 1) return (1 - ax) * at(ix, 0) + ax * at(ix + 1, 0);
  return (1 - ax) * (1 - ay) * at(ix, iy) + ax * (1 - ay) * at(ix + 1, iy) +
         (1 - ax) * ay * at(ix, iy + 1) + ax * ay * at(ix + 1, iy + 1);
}

}  // namespace

double PhaseScreen::phase_at(double x, double y) const {
  return bilinear(phase, nx, ny, (x - x0) / pitch, (y - y0) / pitch);
}

cdouble PhaseScreen::transmittance(double x, double y) const {
  double ph = phase_at(x, y);
  double a = amplitude.empty()
                 ? 1.0
                 : bilinear(amplitude, nx, ny, (x - x0) / pitch, (y - y0) / pitch);
  return std::polar(a, ph);
}

namespace {

PhaseScreen smooth_screen(double z_mm, double half_extent_mm, double pitch_mm,
                          double corr_mm, const Rng& stream,
                          std::uint64_t ctr_base) {
  PhaseScreen s;
  s.z = z_mm;
  s.pitch = pitch_mm;
  s.nx = s.ny = 2 * static_cast<int>(std::ceil(half_extent_mm / pitch_mm)) + 1;
  s.x0 = -0.5 * (s.nx - 1) * pitch_mm;
  s.y0 = -0.5 * (s.ny - 1) * pitch_mm;

  std::vector<double> white(static_cast<std::size_t>(s.nx) * s.ny);
  for (std::size_t k = 0; k < white.size(); ++k)
    white[k] = stream.gauss(ctr_base + k).first;

  // Separable Gaussian smoothing with sigma = corr / sqrt(2) gives field
  // correlation exp(-d^2 / (2 corr^2)).
  double sigma = corr_mm / pitch_mm / std::sqrt(2.0);
  int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> kernel(2 * half + 1);
  for (int k = -half; k <= half; ++k)
    kernel[k + half] = std::exp(-0.5 * (k / sigma) * (k / sigma));

  auto convolve_axis = [&](const std::vector<double>& in, bool along_x) {
    std::vector<double> out(in.size(), 0.0);
    for (int j = 0; j < s.ny; ++j)
      for (int i = 0; i < s.nx; ++i) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) {
          int ii = along_x ? std::clamp(i + k, 0, s.nx - 1) : i;
          int jj = along_x ? j : std::clamp(j + k, 0, s.ny - 1);
          acc += kernel[k + half] * in[jj * s.nx + ii];
        }
        out[j * s.nx + i] = acc;
      }
    return out;
  };
  auto smooth = convolve_axis(convolve_axis(white, true), false);

  double mean = 0.0;
  for (double v : smooth) mean += v;
  mean /= smooth.size();
  double var = 0.0;
  for (double v : smooth) var += (v - mean) * (v - mean);
  var /= smooth.size();
  double scale = var > 0 ? 1.0 / std::sqrt(var) : 0.0;

  s.phase.resize(smooth.size());
  for (std::size_t k = 0; k < smooth.size(); ++k)
    s.phase[k] = static_cast<float>((smooth[k] - mean) * scale);
  return s;
}

}  // namespace

PhaseScreen make_random_screen(double z_mm, double half_extent_mm, double pitch_mm,
                               double rms_rad, double corr_mm, const Rng& rng) {
  PhaseScreen s = smooth_screen(z_mm, half_extent_mm, pitch_mm, corr_mm,
                                rng.substream("screen"), 0);
  for (auto& p : s.phase) p *= static_cast<float>(rms_rad);
  s.validate();
  return s;
}

PhaseScreen make_split_screen(double z_mm, double half_extent_mm, double pitch_mm,
                              double rms_left, double rms_right, double corr_mm,
                              const Rng& rng) {
  PhaseScreen left = smooth_screen(z_mm, half_extent_mm, pitch_mm, corr_mm,
                                   rng.substream("screen-left"), 0);
  PhaseScreen right = smooth_screen(z_mm, half_extent_mm, pitch_mm, corr_mm,
                                    rng.substream("screen-right"), 0);
  PhaseScreen s = left;
  for (int j = 0; j < s.ny; ++j)
    for (int i = 0; i < s.nx; ++i) {
      std::size_t k = static_cast<std::size_t>(j) * s.nx + i;
      double x = s.x0 + i * s.pitch;
      s.phase[k] = static_cast<float>(x < 0 ? rms_left * left.phase[k]
                                            : rms_right * right.phase[k]);
    }
  s.validate();
  return s;
}

}  // namespace umi
