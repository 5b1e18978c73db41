#include "umi/probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace umi {

int ProbeModel::active_count() const {
  int n = 0;
  for (auto a : element_active) n += a ? 1 : 0;
  return n;
}

void ProbeModel::validate() const {
  if (element_positions.empty()) throw ContractError("probe has no elements");
  if (element_active.size() != element_positions.size())
    throw ContractError("probe active mask size mismatch");
  if (active_count() <= 0) throw ContractError("probe has no active elements");
  if (pitch <= 0) throw ContractError("probe pitch must be positive");
  if (!(directivity_limit > 0 && directivity_limit < pi / 2))
    throw ContractError("directivity limit must lie in (0, pi/2)");
  if (bandwidth() <= 0) throw ContractError("probe bandwidth must be positive");
  if (c0 <= 0 || center_frequency <= 0)
    throw ContractError("c0 and center frequency must be positive");
}

ProbeModel make_grid_probe(int nx, int ny, double pitch, double fc_mhz,
                           double bw_lo_mhz, double bw_hi_mhz, double c0_mm_us,
                           double theta_max_rad, const std::vector<int>& dead,
                           int inactive_row_period, int inactive_row_count) {
  if (nx <= 0 || ny <= 0) throw ContractError("probe grid must be non-empty");
  ProbeModel p;
  p.pitch = pitch;
  p.center_frequency = fc_mhz;
  p.bandwidth_lo = bw_lo_mhz;
  p.bandwidth_hi = bw_hi_mhz;
  p.c0 = c0_mm_us;
  p.directivity_limit = theta_max_rad;

  // Row positions along y, skipping inactive rows between blocks.
  std::vector<int> row_slots(ny);
  int slot = 0;
  for (int j = 0; j < ny; ++j) {
    if (inactive_row_period > 0 && j > 0 && j % inactive_row_period == 0)
      slot += inactive_row_count;
    row_slots[j] = slot++;
  }
  int total_slots = row_slots.back() + 1;

  double x0 = -0.5 * (nx - 1) * pitch;
  double y0 = -0.5 * (total_slots - 1) * pitch;
  p.element_positions.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      p.element_positions.push_back({x0 + i * pitch, y0 + row_slots[j] * pitch});

  p.element_active.assign(p.element_positions.size(), 1);
  for (int d : dead) {
    if (d < 0 || d >= p.element_count()) throw ContractError("dead element index out of range");
    p.element_active[d] = 0;
  }
  p.aperture = {nx * pitch, total_slots * pitch};
  p.validate();
  return p;
}

double diffraction_limit(const ProbeModel& probe, double z_mm) {
  if (!(z_mm > 0)) throw ContractError("diffraction limit requires z > 0");
  double du = std::min(probe.aperture.x, probe.aperture.y);
  return probe.wavelength() / (2.0 * std::sin(std::atan(du / (2.0 * z_mm))));
}

Vec2 diffraction_limit_xy(const ProbeModel& probe, double z_mm) {
  if (!(z_mm > 0)) throw ContractError("diffraction limit requires z > 0");
  double lam = probe.wavelength();
  auto one = [&](double du) { return lam / (2.0 * std::sin(std::atan(du / (2.0 * z_mm)))); };
  return {one(probe.aperture.x), one(probe.aperture.y)};
}

double axial_resolution(const ProbeModel& probe) {
  return probe.c0 / (2.0 * probe.bandwidth());
}

double nyquist_directivity(const ProbeModel& probe) {
  double s = probe.wavelength() / (2.0 * probe.pitch);
  return std::asin(std::min(1.0, s));
}

void IlluminationBasis::validate(const ProbeModel& probe) const {
  if (kind == Kind::Transducer) return;
  if (angles.empty()) throw ContractError("plane-wave basis has no angles");
  if (!(angular_pitch > 0)) throw ContractError("plane-wave basis needs a positive pitch");
  for (const auto& a : angles)
    if (std::abs(a.x) > probe.directivity_limit + 1e-9 ||
        std::abs(a.y) > probe.directivity_limit + 1e-9)
      throw ContractError("plane-wave angle exceeds the directivity limit");
}

IlluminationBasis plane_wave_grid(const ProbeModel& probe) {
  double s = probe.wavelength() / (2.0 * probe.aperture.y);
  double pitch = std::asin(std::min(1.0, s));
  return plane_wave_grid_with_pitch(probe, pitch);
}

IlluminationBasis plane_wave_grid_with_pitch(const ProbeModel& probe, double pitch_rad) {
  if (!(pitch_rad > 0)) throw ContractError("angular pitch must be positive");
  IlluminationBasis b;
  b.kind = IlluminationBasis::Kind::PlaneWave;
  b.angular_pitch = pitch_rad;
  int k = static_cast<int>(std::floor(probe.directivity_limit / pitch_rad + 1e-12));
  b.angles.reserve(static_cast<std::size_t>(2 * k + 1) * (2 * k + 1));
  for (int jy = -k; jy <= k; ++jy)
    for (int jx = -k; jx <= k; ++jx)
      b.angles.push_back({jx * pitch_rad, jy * pitch_rad});
  return b;
}

IlluminationBasis downsample_angles(const IlluminationBasis& basis, int factor) {
  if (basis.kind != IlluminationBasis::Kind::PlaneWave)
    throw ContractError("angle downsampling applies to plane-wave bases");
  if (factor < 1) throw ContractError("downsampling factor must be >= 1");
  if (factor == 1) return basis;

  // Keep angles whose per-axis index (relative to the most negative one)
  // is a multiple of factor; 0 stays on the grid.
  std::set<long long> xs, ys;
  auto key = [&](double v) { return llround(v / basis.angular_pitch * 4.0); };
  for (const auto& a : basis.angles) {
    xs.insert(key(a.x));
    ys.insert(key(a.y));
  }
  std::map<long long, int> xi, yi;
  int i = 0;
  for (auto v : xs) xi[v] = i++;
  i = 0;
  for (auto v : ys) yi[v] = i++;
  int x_center = xi[key(0.0)];
  int y_center = yi[key(0.0)];

  IlluminationBasis out;
  out.kind = basis.kind;
  out.angular_pitch = basis.angular_pitch * factor;
  for (const auto& a : basis.angles) {
    if ((xi[key(a.x)] - x_center) % factor == 0 &&
        (yi[key(a.y)] - y_center) % factor == 0)
      out.angles.push_back(a);
  }
  return out;
}

}  // namespace umi
