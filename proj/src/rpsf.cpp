#include "umi/rpsf.hpp"

#include <algorithm>
#include <cmath>

namespace umi {

RpsfMap local_rpsf_window(const FocusedRMatrix& f, const SpatialWindow& w) {
  w.validate();
  if (resolution_cell_count(w, f.probe) < 4.0)
    throw ContractError("window holds fewer than 4 resolution cells");

  RpsfMap map;
  map.window = w;
  map.offsets = f.offsets;
  map.drho0 = diffraction_limit(f.probe, w.center.z);
  const int n_off = f.n_offsets();
  map.mean_intensity.assign(n_off, 0.0);
  map.counts.assign(n_off, 0);

  for (int zi = 0; zi < f.n_depths(); ++zi) {
    if (std::abs(f.grid.z[zi] - w.center.z) >= 0.5 * w.extent.z) continue;
    for (int vox = 0; vox < f.grid.transverse_count(); ++vox) {
      Vec2 xy = f.grid.voxel_xy(vox);
      for (int oi = 0; oi < n_off; ++oi) {
        Vec2 off = f.offsets.offset_mm(oi);
        double mx = xy.x + 0.5 * off.x, my = xy.y + 0.5 * off.y;
        if (std::abs(mx - w.center.x) >= 0.5 * w.extent.x ||
            std::abs(my - w.center.y) >= 0.5 * w.extent.y)
          continue;
        map.mean_intensity[oi] += std::norm(f.at(zi, vox, oi));
        ++map.counts[oi];
      }
    }
  }
  bool any = false;
  for (int oi = 0; oi < n_off; ++oi)
    if (map.counts[oi] > 0) {
      map.mean_intensity[oi] /= map.counts[oi];
      any = true;
    }
  if (!any) throw ContractError("window contains no pair midpoints");
  return map;
}

std::vector<RpsfMap> local_rpsf(const FocusedRMatrix& f,
                                const std::vector<SpatialWindow>& windows) {
  std::vector<RpsfMap> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(local_rpsf_window(f, w));
  return out;
}

ResolutionEstimate resolution(const RpsfMap& map, int upsample) {
  ResolutionEstimate est;
  const int R = map.offsets.radius;
  const int side = 2 * R + 1;
  const double pitch = map.offsets.pitch;

  // Dense amplitude image of the offset lattice (NaN-free; holes get 0).
  std::vector<double> amp(static_cast<std::size_t>(side) * side, 0.0);
  for (int oi = 0; oi < map.offsets.count(); ++oi) {
    auto [dx, dy] = map.offsets.steps[oi];
    amp[(dy + R) * side + (dx + R)] = map.amplitude(oi);
  }
  double a0 = amp[R * side + R];
  if (a0 <= 0) return est;

  // Peak must sit at zero offset.
  for (std::size_t k = 0; k < amp.size(); ++k)
    if (amp[k] > a0 * (1.0 + 1e-9)) return est;

  // Background from the outer annulus of the table.
  double bg = 0.0;
  int nbg = 0;
  double rmax = map.offsets.dmax;
  for (int oi = 0; oi < map.offsets.count(); ++oi) {
    Vec2 off = map.offsets.offset_mm(oi);
    if (norm(off) >= 0.8 * rmax) {
      bg += map.amplitude(oi);
      ++nbg;
    }
  }
  if (nbg > 0 && bg / nbg > 0.5 * a0) return est;  // cannot be extracted

  // Area above half maximum on an upsampled lattice.
  upsample = std::max(1, upsample);
  const double step = pitch / upsample;
  const int n = (side - 1) * upsample + 1;
  auto sample = [&](int i, int j) {
    double fx = static_cast<double>(i) / upsample;
    double fy = static_cast<double>(j) / upsample;
    int ix = std::min(static_cast<int>(fx), side - 2);
    int iy = std::min(static_cast<int>(fy), side - 2);
    double ax = fx - ix, ay = fy - iy;
    return (1 - ax) * (1 - ay) * amp[iy * side + ix] +
           ax * (1 - ay) * amp[iy * side + ix + 1] +
           (1 - ax) * ay * amp[(iy + 1) * side + ix] +
           ax * ay * amp[(iy + 1) * side + ix + 1];
  };
  std::size_t count = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (sample(i, j) > 0.5 * a0) ++count;
  est.radius_mm = std::sqrt(count * step * step / pi);
  est.resolved = true;
  return est;
}

ScatteringMetrics scattering_rates(const FocusedRMatrix& f, const SpatialWindow& w,
                                   bool paper_convention) {
  double drho0 = diffraction_limit(f.probe, w.center.z);
  double annulus_lo = 6.0 * drho0;
  double annulus_hi = std::min(f.offsets.dmax, 10.0 * drho0);
  if (f.offsets.dmax < annulus_lo)
    throw ContractError("dmax below 6 drho0: de-scanned annulus unavailable");

  RpsfMap map = local_rpsf_window(f, w);
  ScatteringMetrics m;
  m.rpsf0 = map.peak();

  double acc = 0.0;
  long total = 0;
  std::vector<std::uint8_t> in_annulus(f.n_offsets(), 0);
  for (int oi = 0; oi < f.n_offsets(); ++oi) {
    double r = norm(f.offsets.offset_mm(oi));
    if (r > annulus_lo && r <= annulus_hi + 1e-9) {
      in_annulus[oi] = 1;
      acc += map.mean_intensity[oi] * map.counts[oi];
      total += map.counts[oi];
    }
  }
  if (total == 0) throw ContractError("annulus contains no samples");
  m.background = acc / total;
  m.single = std::max(0.0, m.rpsf0 - m.background);
  m.contrast = m.background > 0 ? m.single / m.background : 0.0;

  // Symmetry degree over the annulus: pairs whose transpose is stored.
  double num = 0.0, den = 0.0;
  for (int zi = 0; zi < f.n_depths(); ++zi) {
    if (std::abs(f.grid.z[zi] - w.center.z) >= 0.5 * w.extent.z) continue;
    for (int vox = 0; vox < f.grid.transverse_count(); ++vox) {
      Vec2 xy = f.grid.voxel_xy(vox);
      for (int oi = 0; oi < f.n_offsets(); ++oi) {
        if (!in_annulus[oi]) continue;
        Vec2 off = f.offsets.offset_mm(oi);
        double mx = xy.x + 0.5 * off.x, my = xy.y + 0.5 * off.y;
        if (std::abs(mx - w.center.x) >= 0.5 * w.extent.x ||
            std::abs(my - w.center.y) >= 0.5 * w.extent.y)
          continue;
        auto [tvox, toi] = f.transpose_slot(vox, oi);
        if (tvox < 0) continue;
        cdouble a = cdouble(f.at(zi, vox, oi));
        cdouble b = cdouble(f.at(zi, tvox, toi));
        num += std::norm(0.5 * (a + b));
        den += std::norm(a);
      }
    }
  }
  m.beta = den > 0 ? num / den : 0.0;

  double b_over_p = m.rpsf0 > 0 ? std::min(1.0, m.background / m.rpsf0) : 0.0;
  if (paper_convention) {
    m.alpha_m = m.beta * b_over_p;
    m.alpha_n = (1.0 - m.beta) * b_over_p;
  } else {
    m.alpha_m = std::max(0.0, 2.0 * m.beta - 1.0) * b_over_p;
    m.alpha_n = b_over_p - m.alpha_m;
  }
  m.alpha_s = 1.0 - m.alpha_m - m.alpha_n;
  return m;
}

RpsfStack analyze_windows(const FocusedRMatrix& f,
                          const std::vector<SpatialWindow>& windows,
                          bool paper_convention) {
  RpsfStack stack;
  for (const auto& w : windows) {
    WindowMetrics wm;
    wm.window = w;
    RpsfMap map;
    try {
      map = local_rpsf_window(f, w);
    } catch (const ContractError&) {
      continue;
    }
    wm.res = resolution(map);
    try {
      wm.scattering = scattering_rates(f, w, paper_convention);
    } catch (const ContractError&) {
      wm.scattering.reset();
    }
    stack.maps.push_back(std::move(map));
    stack.metrics.push_back(std::move(wm));
  }
  return stack;
}

}  // namespace umi
