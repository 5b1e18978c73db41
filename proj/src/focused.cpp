#include "umi/focused.hpp"

#include <cmath>

namespace umi {

OffsetTable OffsetTable::build(double pitch, double dmax) {
  if (!(pitch > 0)) throw ContractError("offset table needs a positive pitch");
  if (dmax < 0) throw ContractError("dmax must be non-negative");
  OffsetTable t;
  t.pitch = pitch;
  t.dmax = dmax;
  t.radius = static_cast<int>(std::floor(dmax / pitch + 1e-9));
  int side = 2 * t.radius + 1;
  t.reverse.assign(static_cast<std::size_t>(side) * side, -1);
  for (int dy = -t.radius; dy <= t.radius; ++dy)
    for (int dx = -t.radius; dx <= t.radius; ++dx) {
      double d = pitch * std::sqrt(double(dx) * dx + double(dy) * dy);
      if (d <= dmax + 1e-9) {
        t.reverse[(dy + t.radius) * side + (dx + t.radius)] =
            static_cast<int>(t.steps.size());
        t.steps.emplace_back(static_cast<std::int16_t>(dx),
                             static_cast<std::int16_t>(dy));
      }
    }
  t.zero_index = t.index_of(0, 0);
  return t;
}

std::pair<int, int> FocusedRMatrix::transpose_slot(int vox, int oi) const {
  int ix = vox % grid.nx + offsets.steps[oi].first;
  int iy = vox / grid.nx + offsets.steps[oi].second;
  if (!grid.in_bounds(ix, iy)) return {-1, -1};
  return {grid.voxel_index(ix, iy), offsets.mirror_index(oi)};
}

void FocusedRMatrix::validate() const {
  grid.validate();
  if (blocks.size() != grid.z.size()) throw ContractError("focused matrix depth count mismatch");
  for (const auto& b : blocks)
    if (b.size() != static_cast<std::size_t>(grid.transverse_count()) * offsets.count())
      throw ContractError("focused matrix block size mismatch");
}

ConfocalVolume confocal(const FocusedRMatrix& f) {
  if (f.offsets.zero_index < 0) throw ContractError("focused matrix lacks the diagonal");
  ConfocalVolume v;
  v.grid = f.grid;
  v.intensity.resize(f.n_depths());
  for (int zi = 0; zi < f.n_depths(); ++zi) {
    v.intensity[zi].resize(f.grid.transverse_count());
    for (int vox = 0; vox < f.grid.transverse_count(); ++vox)
      v.intensity[zi][vox] = std::norm(f.at(zi, vox, f.offsets.zero_index));
  }
  return v;
}

namespace {

void inject(FocusedRMatrix& f, double per_entry_power, std::uint64_t seed,
            bool symmetric) {
  double sigma = std::sqrt(per_entry_power);
  Rng rng(seed, symmetric ? "inject-symmetric" : "inject-noise");
  const int n_off = f.n_offsets();
  const std::size_t n_vox = f.grid.transverse_count();
  for (int zi = 0; zi < f.n_depths(); ++zi) {
    std::uint64_t base = static_cast<std::uint64_t>(zi) * n_vox * n_off;
    for (std::size_t vox = 0; vox < n_vox; ++vox)
      for (int oi = 0; oi < n_off; ++oi) {
        std::uint64_t key = base + vox * n_off + oi;
        if (symmetric) {
          // Same draw for a pair and its transpose keeps the injected
          // component exactly reciprocal.
          auto [tvox, toi] = f.transpose_slot(static_cast<int>(vox), oi);
          if (tvox >= 0) {
            std::uint64_t tkey = base + static_cast<std::uint64_t>(tvox) * n_off + toi;
            key = std::min(key, tkey);
          }
        }
        cdouble g = sigma * rng.cgauss(key);
        f.at(zi, static_cast<int>(vox), oi) +=
            cfloat{static_cast<float>(g.real()), static_cast<float>(g.imag())};
      }
  }
}

}  // namespace

void inject_symmetric_background(FocusedRMatrix& f, double per_entry_power,
                                 std::uint64_t seed) {
  inject(f, per_entry_power, seed, true);
}

void inject_noise_background(FocusedRMatrix& f, double per_entry_power,
                             std::uint64_t seed) {
  inject(f, per_entry_power, seed, false);
}

FocusedRMatrix confocal_filter(const FocusedRMatrix& f,
                               const std::function<double(double)>& lc_of_z) {
  FocusedRMatrix out = f;
  const int n_off = f.n_offsets();
  std::vector<float> gain(n_off);
  for (int zi = 0; zi < f.n_depths(); ++zi) {
    double lc = lc_of_z(f.grid.z[zi]);
    if (!(lc > 0)) throw ContractError("confocal filter width must be positive");
    for (int oi = 0; oi < n_off; ++oi) {
      Vec2 d = f.offsets.offset_mm(oi);
      gain[oi] = static_cast<float>(std::exp(-(d.x * d.x + d.y * d.y) / (2.0 * lc * lc)));
    }
    auto& block = out.blocks[zi];
    for (std::size_t vox = 0; vox < static_cast<std::size_t>(f.grid.transverse_count()); ++vox)
      for (int oi = 0; oi < n_off; ++oi) block[vox * n_off + oi] *= gain[oi];
  }
  return out;
}

FocusedRMatrix adaptive_confocal_filter(const FocusedRMatrix& f, double scale) {
  const ProbeModel& probe = f.probe;
  return confocal_filter(
      f, [&probe, scale](double z) { return scale * diffraction_limit(probe, z); });
}

}  // namespace umi
