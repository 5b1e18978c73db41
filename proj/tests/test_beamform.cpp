#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>

#include "umi/beamform.hpp"
#include "umi/simulate.hpp"

using namespace umi;

namespace {

ProbeModel probe16() {
  return make_grid_probe(16, 16, 0.5, 3.0, 1.8, 4.2, 1.54, deg_to_rad(28.0));
}

ProbeModel probe8() {
  return make_grid_probe(8, 8, 0.5, 3.0, 1.8, 4.2, 1.54, deg_to_rad(28.0));
}

std::shared_ptr<const ReflectionMatrixRaw> sim(const MediumDescription& m,
                                               const PhaseScreen* s,
                                               const ProbeModel& p,
                                               const IlluminationBasis& b,
                                               std::uint64_t seed = 1,
                                               double noise = 0.0) {
  SimulateOptions opts;
  opts.noise_power = noise;
  return std::make_shared<ReflectionMatrixRaw>(simulate(m, s, p, b, opts, seed));
}

}  // namespace

TEST_CASE("point target peaks at the true voxel, transducer and fourier reps") {
  ProbeModel p = probe16();
  MediumDescription m;
  m.scatterers.push_back({{1.0, -0.5, 26.0}, {1.0, 0.0}});
  auto raw = sim(m, nullptr, p, IlluminationBasis{});

  for (OutputRep rep : {OutputRep::Transducer, OutputRep::Fourier}) {
    BeamformSettings s;
    s.grid = VoxelGrid::parse("x=-3:0.5:3,y=-3:0.5:3,z=24:0.5:28");
    s.dmax_mm = 0.0;
    s.out_rep = rep;
    s.fourier_downsample = 2;
    FocusedRMatrix f = beamform(raw, s);
    ConfocalVolume v = confocal(f);
    int best_z = 0, best_vox = 0;
    double best = -1;
    for (int zi = 0; zi < f.n_depths(); ++zi)
      for (int vox = 0; vox < f.grid.transverse_count(); ++vox)
        if (v.at(zi, vox) > best) {
          best = v.at(zi, vox);
          best_z = zi;
          best_vox = vox;
        }
    Vec2 xy = f.grid.voxel_xy(best_vox);
    CHECK(std::abs(xy.x - 1.0) <= 0.5);
    CHECK(std::abs(xy.y + 0.5) <= 0.5);
    CHECK(std::abs(f.grid.z[best_z] - 26.0) <= 0.5);
  }
}

TEST_CASE("confocal peak is real-positive at exact focus") {
  ProbeModel p = probe16();
  MediumDescription m;
  m.scatterers.push_back({{0.5, 0.5, 25.0}, {1.0, 0.0}});
  auto raw = sim(m, nullptr, p, IlluminationBasis{});
  BeamformSettings s;
  s.grid = VoxelGrid::parse("x=0.5:0.5:0.5,y=0.5:0.5:0.5,z=25:0.5:25");
  s.dmax_mm = 0.0;
  FocusedRMatrix f = beamform(raw, s);
  cfloat peak = f.at(0, 0, f.offsets.zero_index);
  CHECK(peak.real() > 0);
  CHECK(std::abs(peak.imag()) < 0.05 * peak.real());
}

TEST_CASE("point-target confocal contrast exceeds 20 dB at 2 drho0") {
  ProbeModel p = probe16();
  MediumDescription m;
  m.scatterers.push_back({{0.0, 0.0, 26.0}, {1.0, 0.0}});
  auto raw = sim(m, nullptr, p, IlluminationBasis{});
  BeamformSettings s;
  s.grid = VoxelGrid::parse("x=-4:0.5:4,y=-4:0.5:4,z=26:0.5:26");
  s.dmax_mm = 0.0;
  FocusedRMatrix f = beamform(raw, s);
  ConfocalVolume v = confocal(f);
  double drho0 = diffraction_limit(p, 26.0);
  double peak = v.at(0, f.grid.voxel_index(8, 8));
  // Surround: voxels at lateral distance >= 2 drho0 from the target.
  double surround = 0;
  int n = 0;
  for (int vox = 0; vox < f.grid.transverse_count(); ++vox) {
    Vec2 xy = f.grid.voxel_xy(vox);
    if (norm(xy) >= 2.0 * drho0) {
      surround = std::max(surround, static_cast<double>(v.at(0, vox)));
      ++n;
    }
  }
  REQUIRE(n > 0);
  CHECK(10.0 * std::log10(peak / surround) > 20.0);
}

TEST_CASE("zero matrix gives zero confocal volume, intensity nonnegative") {
  ProbeModel p = probe8();
  FocusedRMatrix f;
  f.grid = VoxelGrid::parse("x=-1:0.5:1,y=-1:0.5:1,z=20:1:21");
  f.offsets = OffsetTable::build(0.5, 1.0);
  f.probe = p;
  f.blocks.assign(2, std::vector<cfloat>(
                         static_cast<std::size_t>(f.grid.transverse_count()) *
                             f.offsets.count(),
                         cfloat{0, 0}));
  ConfocalVolume v = confocal(f);
  for (int zi = 0; zi < 2; ++zi)
    for (int vox = 0; vox < f.grid.transverse_count(); ++vox)
      CHECK(v.at(zi, vox) == 0.0f);
}

TEST_CASE("focused matrix of reciprocal data is symmetric to 1e-6") {
  ProbeModel p = probe8();
  MediumDescription m;
  m.speckle_regions.push_back({{-3, -3, 20}, {3, 3, 23}, 3.0, 1.0});
  Rng rng(3, "screen");
  PhaseScreen s = make_random_screen(0.5, 5.0, 0.25, 1.0, 1.5, rng);
  auto raw = sim(m, &s, p, IlluminationBasis{}, 7);

  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-2.5:0.5:2.5,y=-2.5:0.5:2.5,z=21:0.5:22");
  bs.dmax_mm = 2.0;
  FocusedRMatrix f = beamform(raw, bs);
  for (int zi = 0; zi < f.n_depths(); ++zi) {
    double num = 0, den = 0;
    for (int vox = 0; vox < f.grid.transverse_count(); ++vox)
      for (int oi = 0; oi < f.n_offsets(); ++oi) {
        auto [tvox, toi] = f.transpose_slot(vox, oi);
        if (tvox < 0) continue;
        cdouble a = cdouble(f.at(zi, vox, oi));
        cdouble b = cdouble(f.at(zi, tvox, toi));
        num += std::norm(a - b);
        den += std::norm(a);
      }
    REQUIRE(den > 0);
    CHECK(std::sqrt(num / den) < 1e-6);
  }
}

TEST_CASE("swapping focusing points reproduces entries on reciprocal data") {
  ProbeModel p = probe8();
  MediumDescription m;
  m.scatterers.push_back({{0.3, -0.4, 21.0}, {1.0, 0.2}});
  auto raw = sim(m, nullptr, p, IlluminationBasis{});
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-1:0.5:1,y=-1:0.5:1,z=21:0.5:21");
  bs.dmax_mm = 1.5;
  FocusedRMatrix f = beamform(raw, bs);
  int vox = f.grid.voxel_index(1, 2);
  int oi = f.offsets.index_of(1, -1);
  auto [tvox, toi] = f.transpose_slot(vox, oi);
  REQUIRE(tvox >= 0);
  cdouble a = cdouble(f.at(0, vox, oi));
  cdouble b = cdouble(f.at(0, tvox, toi));
  CHECK(std::abs(a - b) <= 1e-6 * std::abs(a));
}

TEST_CASE("direct confocal compounding equals the matrix diagonal") {
  ProbeModel p = probe8();
  MediumDescription m;
  m.speckle_regions.push_back({{-2, -2, 20}, {2, 2, 22}, 3.0, 1.0});
  auto raw = sim(m, nullptr, p, IlluminationBasis{}, 5, 0.05);
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-2:0.5:2,y=-2:0.5:2,z=20.5:0.5:21.5");
  bs.dmax_mm = 1.0;
  FocusedRMatrix f = beamform(raw, bs);
  ConfocalVolume via_matrix = confocal(f);
  ConfocalVolume direct = confocal_direct(raw, bs);
  double num = 0, den = 0;
  for (int zi = 0; zi < f.n_depths(); ++zi)
    for (int vox = 0; vox < f.grid.transverse_count(); ++vox) {
      num += std::pow(double(via_matrix.at(zi, vox)) - direct.at(zi, vox), 2);
      den += std::pow(double(direct.at(zi, vox)), 2);
    }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("flat law fields leave the beamformed matrix bit-identical") {
  ProbeModel p = probe8();
  MediumDescription m;
  m.scatterers.push_back({{0.0, 0.2, 20.0}, {1.0, 0.0}});
  auto raw = sim(m, nullptr, p, IlluminationBasis{});
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-1:0.5:1,y=-1:0.5:1,z=20:0.5:20.5");
  bs.dmax_mm = 1.0;
  FocusedRMatrix base = beamform(raw, bs);

  LawField flat_in;
  flat_in.n_channels = raw->n_in;
  flat_in.x0 = bs.grid.x0;
  flat_in.y0 = bs.grid.y0;
  flat_in.pitch = bs.grid.pitch;
  flat_in.nx = bs.grid.nx;
  flat_in.ny = bs.grid.ny;
  flat_in.tables.assign(bs.grid.z.size(),
                        std::vector<cfloat>(static_cast<std::size_t>(bs.grid.transverse_count()) *
                                                raw->n_in,
                                            cfloat{1, 0}));
  FocusedRMatrix with_flat = beamform(raw, bs, nullptr, &flat_in, nullptr);
  for (int zi = 0; zi < base.n_depths(); ++zi)
    REQUIRE(base.blocks[zi] == with_flat.blocks[zi]);
}

TEST_CASE("thread count does not change beamformed values") {
  ProbeModel p = probe8();
  MediumDescription m;
  m.speckle_regions.push_back({{-2, -2, 20}, {2, 2, 21.5}, 2.0, 1.0});
  auto raw = sim(m, nullptr, p, IlluminationBasis{}, 2, 0.1);
  BeamformSettings one;
  one.grid = VoxelGrid::parse("x=-2:0.5:2,y=-2:0.5:2,z=20.5:0.5:21");
  one.dmax_mm = 1.5;
  one.threads = 1;
  BeamformSettings four = one;
  four.threads = 4;
  FocusedRMatrix a = beamform(raw, one);
  FocusedRMatrix b = beamform(raw, four);
  for (int zi = 0; zi < a.n_depths(); ++zi) REQUIRE(a.blocks[zi] == b.blocks[zi]);
}

TEST_CASE("uncovered focal points are zeroed and reported") {
  // A probe far from the grid footprint: steering cone misses the voxels.
  ProbeModel p = probe8();
  MediumDescription m;
  m.scatterers.push_back({{0, 0, 20}, {1.0, 0.0}});
  auto raw = sim(m, nullptr, p, IlluminationBasis{});
  BeamformSettings bs;
  // x from 30 mm: over 56 degrees off axis at z = 20, beyond the cone.
  bs.grid = VoxelGrid::parse("x=30:0.5:31,y=0:0.5:1,z=20:0.5:20");
  bs.dmax_mm = 0.0;
  BeamformDiagnostics diag;
  FocusedRMatrix f = beamform(raw, bs, &diag);
  CHECK(diag.uncovered_points > 0);
  for (int vox = 0; vox < f.grid.transverse_count(); ++vox)
    CHECK(f.at(0, vox, f.offsets.zero_index) == cfloat{0, 0});
}

TEST_CASE("plane-wave aliasing diagnostic flags dmax beyond the bound") {
  ProbeModel p = probe16();
  IlluminationBasis pw = downsample_angles(plane_wave_grid(p), 4);
  MediumDescription m;
  m.scatterers.push_back({{0, 0, 25}, {1.0, 0.0}});
  auto raw = sim(m, nullptr, p, pw);
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-1:0.5:1,y=-1:0.5:1,z=25:0.5:25");
  bs.dmax_mm = 6.0;
  BeamformDiagnostics diag;
  beamform(raw, bs, &diag);
  CHECK(diag.aliasing_bound_mm > 0);
  CHECK(diag.aliasing_bound_mm < 6.0);
  CHECK(diag.aliasing_risk);
}

TEST_CASE("kernel cost scales linearly in channels x voxels") {
  ProbeModel p = probe8();
  MediumDescription m;
  m.speckle_regions.push_back({{-6, -6, 20}, {6, 6, 22}, 1.0, 1.0});
  auto raw = sim(m, nullptr, p, IlluminationBasis{}, 4);

  auto time_grid = [&](const std::string& spec) {
    BeamformSettings bs;
    bs.grid = VoxelGrid::parse(spec);
    bs.dmax_mm = 2.0;
    bs.threads = 1;
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      auto start = std::chrono::steady_clock::now();
      beamform(raw, bs);
      auto stop = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(stop - start).count());
    }
    return std::make_pair(best, double(bs.grid.transverse_count()) *
                                    bs.grid.z.size() * raw->n_in * raw->n_out);
  };

  auto [t1, c1] = time_grid("x=-2.75:0.5:2.75,y=-2.75:0.5:2.75,z=20.4:0.4:21.6");
  auto [t2, c2] = time_grid("x=-5.75:0.5:5.75,y=-5.75:0.5:5.75,z=20.4:0.4:21.6");
  double exponent = std::log(t2 / t1) / std::log(c2 / c1);
  CHECK(exponent == doctest::Approx(1.0).epsilon(0.12));
}

TEST_CASE("emulated linear array focuses and keeps symmetry") {
  ProbeModel p = probe16();
  IlluminationBasis pw = downsample_angles(plane_wave_grid(p), 3);
  MediumDescription m;
  m.scatterers.push_back({{0.0, 2.0, 30.0}, {1.0, 0.0}});
  m.scatterers.push_back({{0.0, -2.0, 30.0}, {1.0, 0.0}});
  auto raw = sim(m, nullptr, p, pw);

  LinearEmulationSettings ls;
  ls.x_f = 0.0;
  ls.z_f = 30.0;
  ls.y0 = -5.0;
  ls.y_pitch = 0.5;
  ls.ny = 21;
  ls.z = {29.0, 29.5, 30.0, 30.5, 31.0};
  ls.dmax_mm = 3.0;
  FocusedRMatrix f = emulate_linear_array(raw, ls);
  CHECK(f.grid.nx == 1);
  ConfocalVolume v = confocal(f);

  // Peaks at y = +-2, z = 30 within one voxel.
  int best_z = 0, best_y = 0;
  double best = -1;
  for (int zi = 0; zi < f.n_depths(); ++zi)
    for (int vox = 0; vox < f.grid.ny; ++vox)
      if (v.at(zi, vox) > best) {
        best = v.at(zi, vox);
        best_z = zi;
        best_y = vox;
      }
  CHECK(std::abs(std::abs(f.grid.y(best_y)) - 2.0) <= 0.5);
  CHECK(std::abs(f.grid.z[best_z] - 30.0) <= 0.5);

  // Mirror symmetry about y = 0 for the symmetric medium.
  for (int zi = 0; zi < f.n_depths(); ++zi)
    for (int vox = 0; vox < f.grid.ny; ++vox) {
      int mirror = f.grid.ny - 1 - vox;
      double a = v.at(zi, vox), b = v.at(zi, mirror);
      CHECK(std::abs(a - b) <= 0.02 * std::max({a, b, best * 1e-6}));
    }
}
