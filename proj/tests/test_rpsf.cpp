#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "umi/rpsf.hpp"
#include "umi/simulate.hpp"
#include "umi/beamform.hpp"

using namespace umi;

namespace {

ProbeModel probe16() {
  return make_grid_probe(16, 16, 0.5, 3.0, 1.8, 4.2, 1.54, deg_to_rad(28.0));
}

// Focused matrix container with empty blocks for synthetic fills.
FocusedRMatrix container(const ProbeModel& p, const std::string& grid_spec,
                         double dmax) {
  FocusedRMatrix f;
  f.grid = VoxelGrid::parse(grid_spec);
  f.offsets = OffsetTable::build(f.grid.pitch, dmax);
  f.probe = p;
  f.fc = p.center_frequency;
  f.c0 = p.c0;
  f.blocks.assign(f.grid.z.size(),
                  std::vector<cfloat>(static_cast<std::size_t>(f.grid.transverse_count()) *
                                          f.offsets.count(),
                                      cfloat{0, 0}));
  return f;
}

RpsfMap gaussian_map(const ProbeModel& p, double a_mm) {
  RpsfMap map;
  map.window = SpatialWindow{{0, 0, 30}, {4, 4, 3}};
  map.offsets = OffsetTable::build(0.5, 8.0);
  map.drho0 = diffraction_limit(p, 30.0);
  map.mean_intensity.resize(map.offsets.count());
  map.counts.assign(map.offsets.count(), 1);
  for (int oi = 0; oi < map.offsets.count(); ++oi) {
    double r = norm(map.offsets.offset_mm(oi));
    // amplitude exp(-ln2 (r/a)^2) halves at r = a; intensity is its square
    double amp = std::exp(-std::log(2.0) * (r / a_mm) * (r / a_mm));
    map.mean_intensity[oi] = amp * amp;
  }
  return map;
}

}  // namespace

TEST_CASE("resolution of an ideal gaussian amplitude map") {
  ProbeModel p = probe16();
  for (double a : {1.0, 1.7, 2.4}) {
    ResolutionEstimate est = resolution(gaussian_map(p, a));
    REQUIRE(est.resolved);
    CHECK(est.radius_mm == doctest::Approx(a).epsilon(0.06));
  }
}

TEST_CASE("flat map is unresolved") {
  ProbeModel p = probe16();
  RpsfMap map = gaussian_map(p, 1.0);
  std::fill(map.mean_intensity.begin(), map.mean_intensity.end(), 0.7);
  ResolutionEstimate est = resolution(map);
  CHECK(!est.resolved);
}

TEST_CASE("pure-noise matrix: flat rpsf, beta one half, zero single scattering") {
  ProbeModel p = probe16();
  FocusedRMatrix f = container(p, "x=-4:0.5:4,y=-4:0.5:4,z=19.5:0.5:20.5", 8.0);
  inject_noise_background(f, 1.0, 42);

  SpatialWindow w{{0, 0, 20}, {2.5, 2.5, 1.2}};
  RpsfMap map = local_rpsf_window(f, w);
  // Stationary noise: max / median below 2 over the offsets.
  std::vector<double> vals = map.mean_intensity;
  std::sort(vals.begin(), vals.end());
  double median = vals[vals.size() / 2];
  CHECK(vals.back() / median < 2.0);
  CHECK(!resolution(map).resolved);

  ScatteringMetrics m = scattering_rates(f, w);
  CHECK(m.beta == doctest::Approx(0.5).epsilon(0.1));
  CHECK(m.alpha_s + m.alpha_m + m.alpha_n == doctest::Approx(1.0).epsilon(1e-9));
  // Noise-calibrated convention: beta = 1/2 maps to alpha_m = 0.
  CHECK(m.alpha_m == doctest::Approx(0.0).epsilon(0.1));
}

TEST_CASE("monte-carlo oracle pins beta of iid noise at one half") {
  // Independent draws of the annulus statistic across seeds.
  ProbeModel p = probe16();
  double acc = 0;
  const int n_mc = 8;
  long annulus_samples = 0;
  for (int k = 0; k < n_mc; ++k) {
    FocusedRMatrix f = container(p, "x=-4:0.5:4,y=-4:0.5:4,z=19.5:0.5:20.5", 8.0);
    inject_noise_background(f, 1.0, 100 + k);
    SpatialWindow w{{0, 0, 20}, {3.2, 3.2, 1.2}};
    ScatteringMetrics m = scattering_rates(f, w);
    acc += m.beta;
    // Count annulus pair samples once.
    if (k == 0) {
      RpsfMap map = local_rpsf_window(f, w);
      double lo = 6.0 * map.drho0, hi = std::min(8.0, 10.0 * map.drho0);
      for (int oi = 0; oi < map.offsets.count(); ++oi) {
        double r = norm(map.offsets.offset_mm(oi));
        if (r > lo && r <= hi) annulus_samples += map.counts[oi];
      }
    }
  }
  CHECK(annulus_samples >= 1000);
  CHECK(acc / n_mc == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("fully symmetric matrix has beta of one") {
  ProbeModel p = probe16();
  FocusedRMatrix f = container(p, "x=-4:0.5:4,y=-4:0.5:4,z=19.5:0.5:20.5", 8.0);
  inject_symmetric_background(f, 1.0, 7);
  SpatialWindow w{{0, 0, 20}, {2.5, 2.5, 1.2}};
  ScatteringMetrics m = scattering_rates(f, w);
  CHECK(m.beta == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("rpsf of symmetric data is even in the offset") {
  ProbeModel p = probe16();
  FocusedRMatrix f = container(p, "x=-4:0.5:4,y=-4:0.5:4,z=19.5:0.5:20.5", 3.0);
  inject_symmetric_background(f, 1.0, 11);
  // Interior window: both pair endpoints always on the grid.
  SpatialWindow w{{0, 0, 20}, {4.0, 4.0, 1.2}};
  RpsfMap map = local_rpsf_window(f, w);
  for (int oi = 0; oi < map.offsets.count(); ++oi) {
    int mi = map.offsets.mirror_index(oi);
    REQUIRE(mi >= 0);
    if (map.counts[oi] == 0) continue;
    CHECK(map.mean_intensity[oi] ==
          doctest::Approx(map.mean_intensity[mi]).epsilon(1e-6));
  }
}

TEST_CASE("scattering decomposition of peak plus symmetric background") {
  ProbeModel p = probe16();
  FocusedRMatrix f = container(p, "x=-4:0.5:4,y=-4:0.5:4,z=19.5:0.5:20.5", 8.0);
  double background = 0.5;
  inject_symmetric_background(f, background, 3);
  // Confocal peak on top of the background.
  for (int zi = 0; zi < f.n_depths(); ++zi)
    for (int vox = 0; vox < f.grid.transverse_count(); ++vox)
      f.at(zi, vox, f.offsets.zero_index) += cfloat{3.0f, 0.0f};

  SpatialWindow w{{0, 0, 20}, {2.5, 2.5, 1.2}};
  ScatteringMetrics m = scattering_rates(f, w);
  CHECK(m.background == doctest::Approx(background).epsilon(0.1));
  CHECK(m.beta == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(m.alpha_n == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(m.alpha_s + m.alpha_m + m.alpha_n == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(m.contrast == doctest::Approx(m.single / m.background));

  ScatteringMetrics paper = scattering_rates(f, w, true);
  CHECK(paper.alpha_m == doctest::Approx(m.beta * m.background / m.rpsf0));
  CHECK(paper.alpha_n == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("window and annulus preconditions") {
  ProbeModel p = probe16();
  FocusedRMatrix f = container(p, "x=-2:0.5:2,y=-2:0.5:2,z=29.5:0.5:30.5", 2.0);
  inject_noise_background(f, 1.0, 1);
  // Fewer than 4 resolution cells.
  SpatialWindow tiny{{0, 0, 30}, {1.0, 1.0, 0.4}};
  CHECK_THROWS_AS(local_rpsf_window(f, tiny), ContractError);
  // Annulus unavailable: dmax = 2 mm below 6 drho0.
  SpatialWindow w{{0, 0, 30}, {3.0, 3.0, 1.0}};
  CHECK_THROWS_AS(scattering_rates(f, w), ContractError);
  // Window outside the grid footprint.
  SpatialWindow away{{30, 30, 30}, {3.0, 3.0, 1.0}};
  CHECK_THROWS_AS(local_rpsf_window(f, away), ContractError);
  // The stack builder skips bad windows instead of throwing.
  RpsfStack stack = analyze_windows(f, {tiny, w, away});
  CHECK(stack.maps.size() == 1);
  CHECK(!stack.metrics[0].scattering.has_value());
}

TEST_CASE("speckle rpsf width sits at the diffraction limit; screens widen it") {
  ProbeModel p = probe16();
  MediumDescription m;
  m.speckle_regions.push_back({{-5, -5, 28.2}, {5, 5, 31.8}, 4.0, 1.0});
  SimulateOptions opts;
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-3:0.5:3,y=-3:0.5:3,z=29.25:0.5:30.75");
  bs.dmax_mm = 4.0;
  SpatialWindow w{{0, 0, 30}, {5.0, 5.0, 1.6}};
  double drho0 = diffraction_limit(p, 30.0);

  auto raw = std::make_shared<ReflectionMatrixRaw>(
      simulate(m, nullptr, p, IlluminationBasis{}, opts, 21));
  FocusedRMatrix f = beamform(raw, bs);
  ResolutionEstimate clean = resolution(local_rpsf_window(f, w));
  REQUIRE(clean.resolved);
  CHECK(clean.radius_mm == doctest::Approx(drho0).epsilon(0.10));

  Rng rng(5, "screen");
  PhaseScreen screen = make_random_screen(0.5, 6.0, 0.25, 1.5, 1.5, rng);
  auto raw_ab = std::make_shared<ReflectionMatrixRaw>(
      simulate(m, &screen, p, IlluminationBasis{}, opts, 21));
  FocusedRMatrix fab = beamform(raw_ab, bs);
  RpsfMap map_ab = local_rpsf_window(fab, w);
  ResolutionEstimate aberrated = resolution(map_ab);
  if (aberrated.resolved) CHECK(aberrated.radius_mm > 1.5 * drho0);
}
