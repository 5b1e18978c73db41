#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "umi/correct.hpp"
#include "umi/rpsf.hpp"
#include "umi/simulate.hpp"

using namespace umi;

namespace {

ProbeModel probe8() {
  return make_grid_probe(8, 8, 0.5, 3.0, 1.8, 4.2, 1.54, deg_to_rad(28.0));
}

std::shared_ptr<const ReflectionMatrixRaw> sim(const MediumDescription& m,
                                               const PhaseScreen* s,
                                               const ProbeModel& p,
                                               std::uint64_t seed = 1,
                                               double noise = 0.0) {
  SimulateOptions opts;
  opts.noise_power = noise;
  return std::make_shared<ReflectionMatrixRaw>(
      simulate(m, s, p, IlluminationBasis{}, opts, seed));
}

std::vector<cdouble> screen_law(const CorrectionBasis& b, const PhaseScreen& s) {
  std::vector<cdouble> law(b.count());
  for (int o = 0; o < b.count(); ++o)
    law[o] = std::polar(1.0, s.phase_at(b.samples[o].x, b.samples[o].y));
  return law;
}

CorrelationMatrix synthetic_corr(const Eigen::MatrixXcd& C) {
  CorrelationMatrix c;
  c.C = C;
  c.active.assign(C.rows(), 1);
  c.anchor = 0;
  c.n_samples = 100;
  c.n_cells = 100;
  c.window = SpatialWindow{{0, 0, 30}, {5, 5, 3}};
  return c;
}

}  // namespace

TEST_CASE("schedule parsing") {
  auto s = parse_schedule("1x1:16,3; 2x2:12,3;4x4:8,3");
  REQUIRE(s.size() == 3);
  CHECK(s[1].nx == 2);
  CHECK(s[1].wx == doctest::Approx(12.0));
  CHECK(s[2].wz == doctest::Approx(3.0));
  CHECK(schedule_string(s) == "1x1:16,3;2x2:12,3;4x4:8,3");
  CHECK_THROWS_AS(parse_schedule(""), ContractError);
  CHECK_THROWS_AS(parse_schedule("0x2:5,1"), ContractError);
  CHECK_THROWS_AS(parse_schedule("2x2:-5,1"), ContractError);
}

TEST_CASE("iterative phase reversal on a rank-1 correlation matrix") {
  const int n = 32;
  Eigen::VectorXcd t(n);
  Rng rng(4, "law");
  for (int i = 0; i < n; ++i) t(i) = std::polar(1.0, two_pi * rng.uniform(i));
  Eigen::MatrixXcd C = t * t.adjoint();
  CorrelationMatrix c = synthetic_corr(C);
  IprResult res = iterative_phase_reversal(c);
  CHECK(res.converged);
  CHECK(res.iterations <= 2);
  // Matches t up to the anchored global phase.
  std::vector<cdouble> truth(n);
  for (int i = 0; i < n; ++i) truth[i] = t(i);
  CHECK(circular_correlation(res.law, truth, c.active) ==
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("identity correlation matrix keeps the initial law") {
  const int n = 16;
  CorrelationMatrix c = synthetic_corr(Eigen::MatrixXcd::Identity(n, n));
  std::vector<cdouble> init(n);
  for (int i = 0; i < n; ++i) init[i] = std::polar(1.0, 0.1 * i);
  IprResult res = iterative_phase_reversal(c, init);
  CHECK(res.converged);
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(res.law[i] - init[i] * std::conj(init[0])) < 1e-9);
}

TEST_CASE("ipr gain history is non-decreasing") {
  const int n = 24;
  Rng rng(9, "psd");
  Eigen::MatrixXcd D(n, 3 * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3 * n; ++j)
      D(i, j) = rng.cgauss(static_cast<std::uint64_t>(i) * 3 * n + j);
  CorrelationMatrix c = synthetic_corr((D * D.adjoint()) / (3.0 * n));
  IprResult res = iterative_phase_reversal(c);
  // Non-decreasing up to fixed-point roundoff.
  for (std::size_t k = 1; k < res.gain_history.size(); ++k)
    CHECK(res.gain_history[k] >= res.gain_history[k - 1] * (1.0 - 1e-4));
}

TEST_CASE("ipr covers both aperture patches where the eigenvector picks one") {
  const int n = 64;
  Rng rng(12, "patch");
  Eigen::VectorXcd ta = Eigen::VectorXcd::Zero(n), tb = Eigen::VectorXcd::Zero(n);
  for (int i = 0; i < n / 2; ++i) ta(i) = std::polar(1.0, two_pi * rng.uniform(i));
  for (int i = n / 2; i < n; ++i) tb(i) = std::polar(1.0, two_pi * rng.uniform(100 + i));
  Eigen::MatrixXcd C = 1.3 * (ta * ta.adjoint()) + 1.0 * (tb * tb.adjoint());
  CorrelationMatrix c = synthetic_corr(C);

  IprResult ipr = iterative_phase_reversal(c);
  EigenAnalysis eig = svd_baseline(c);

  auto coverage = [&](const std::vector<cdouble>& amplitudes) {
    double peak = 0;
    for (const auto& v : amplitudes) peak = std::max(peak, std::abs(v));
    int covered = 0;
    for (const auto& v : amplitudes)
      if (std::abs(v) > 0.5 * peak) ++covered;
    return static_cast<double>(covered) / n;
  };
  // |C x| for the phase-reversal fixed point vs the eigenvector modulus.
  Eigen::Map<const Eigen::VectorXcd> law(ipr.law.data(), n);
  Eigen::VectorXcd cx = c.C * law;
  std::vector<cdouble> cx_v(cx.data(), cx.data() + n);
  CHECK(coverage(cx_v) >= 0.9);
  CHECK(coverage(eig.first) <= 0.6);
  CHECK(eig.effective_rank == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("svd baseline identifies rank one") {
  const int n = 20;
  Eigen::VectorXcd t(n);
  for (int i = 0; i < n; ++i) t(i) = std::polar(1.0, 0.3 * i * i);
  CorrelationMatrix c = synthetic_corr(t * t.adjoint());
  EigenAnalysis eig = svd_baseline(c);
  CHECK(eig.eigenvalues[0] == doctest::Approx(n));
  CHECK(eig.eigenvalues[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(eig.effective_rank == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("reciprocity score basics") {
  const int n = 64;
  std::vector<std::uint8_t> active(n, 1);
  std::vector<cdouble> a(n), b(n);
  Rng rng(5, "eps");
  for (int i = 0; i < n; ++i) {
    a[i] = std::polar(1.0, two_pi * rng.uniform(i));
    b[i] = std::polar(1.0, two_pi * rng.uniform(1000 + i));
  }
  // Identical laws: eps = 0 regardless of a global phase.
  std::vector<cdouble> a2(n);
  for (int i = 0; i < n; ++i) a2[i] = a[i] * std::polar(1.0, 1.2345);
  ReciprocityScore same = reciprocity_score(a, a2, active, 0);
  CHECK(same.scalar == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(same.eps == doctest::Approx(0.0).epsilon(1e-12));
  // Independent laws: scalar near zero, eps near 2.
  ReciprocityScore diff = reciprocity_score(a, b, active, 0);
  CHECK(std::abs(diff.scalar) < 0.35);
  CHECK(diff.eps == doctest::Approx(2.0).epsilon(0.35));
}

TEST_CASE("coherence factor: flat, random, gauge invariance") {
  const int n = 256;
  std::vector<std::uint8_t> active(n, 1);
  std::vector<cdouble> flat(n, {1.0, 0.0});
  CHECK(coherence_factor(flat, active) == doctest::Approx(4.0 / 9.0));
  CHECK(coherence_factor(flat, active) <= 4.0 / 9.0 + 1e-12);

  Rng rng(8, "c");
  std::vector<cdouble> random(n);
  for (int i = 0; i < n; ++i) random[i] = std::polar(1.0, two_pi * rng.uniform(i));
  CHECK(coherence_factor(random, active) < 0.05);

  std::vector<cdouble> rotated(n);
  for (int i = 0; i < n; ++i) rotated[i] = random[i] * std::polar(1.0, 0.7);
  CHECK(coherence_factor(rotated, active) ==
        doctest::Approx(coherence_factor(random, active)).epsilon(1e-12));
}

TEST_CASE("confocal filter: diagonal unchanged, wide filter is identity") {
  ProbeModel p = probe8();
  MediumDescription m;
  m.speckle_regions.push_back({{-2, -2, 20}, {2, 2, 22}, 2.0, 1.0});
  auto raw = sim(m, nullptr, p, 3);
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-2:0.5:2,y=-2:0.5:2,z=20.5:0.5:21.5");
  bs.dmax_mm = 2.0;
  FocusedRMatrix f = beamform(raw, bs);

  FocusedRMatrix tight = confocal_filter(f, [](double) { return 1.0; });
  FocusedRMatrix wide = confocal_filter(f, [](double) { return 1e9; });
  for (int zi = 0; zi < f.n_depths(); ++zi) {
    for (int vox = 0; vox < f.grid.transverse_count(); ++vox) {
      CHECK(tight.at(zi, vox, f.offsets.zero_index) ==
            f.at(zi, vox, f.offsets.zero_index));
      for (int oi = 0; oi < f.n_offsets(); ++oi)
        CHECK(wide.at(zi, vox, oi) == f.at(zi, vox, oi));
    }
  }
  CHECK_THROWS_AS(confocal_filter(f, [](double) { return 0.0; }), ContractError);
}

TEST_CASE("distortion of a zero matrix is zero; rank-1 rows give C = t t+") {
  ProbeModel p = probe8();
  MediumDescription m;
  m.scatterers.push_back({{0, 0, 21}, {1.0, 0.0}});
  auto raw = sim(m, nullptr, p);
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-1.5:0.5:1.5,y=-1.5:0.5:1.5,z=21:0.5:21");
  bs.dmax_mm = 1.5;
  FocusedRMatrix f = beamform(raw, bs);
  for (auto& block : f.blocks) std::fill(block.begin(), block.end(), cfloat{0, 0});
  CorrectionBasis basis = correction_basis_for(f, Side::Output);
  DistortionMatrix d = distortion(f, basis, Side::Output);
  for (const auto& block : d.blocks)
    for (const auto& v : block) CHECK(v == cfloat{0, 0});

  // Hand-built rank-1 distortion rows: C equals the outer product.
  const int n = basis.count();
  Rng rng(6, "t");
  std::vector<cdouble> t(n);
  for (int i = 0; i < n; ++i) t[i] = std::polar(1.0, two_pi * rng.uniform(i));
  DistortionMatrix d1 = d;
  for (std::size_t zi = 0; zi < d1.blocks.size(); ++zi)
    for (int vox = 0; vox < d1.grid.transverse_count(); ++vox) {
      cdouble scale = std::polar(1.0 + 0.1 * vox, 0.3 * vox + 0.2 * zi);
      for (int o = 0; o < n; ++o) {
        cdouble v = scale * t[o];
        d1.blocks[zi][static_cast<std::size_t>(vox) * n + o] =
            cfloat{static_cast<float>(v.real()), static_cast<float>(v.imag())};
      }
    }
  SpatialWindow w{{0, 0, 21}, {10, 10, 2}};
  CorrelationMatrix c = local_correlation(d1, w, p);
  CHECK(c.n_samples == d1.grid.transverse_count());
  // C / C(0,0) == t t+ up to float noise.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      CHECK(std::abs(c.C(i, j) / c.C(0, 0) - t[i] * std::conj(t[j])) < 1e-4);
  CHECK_THROWS_AS(local_correlation(d1, SpatialWindow{{50, 50, 21}, {1, 1, 1}}, p),
                  ContractError);
}

TEST_CASE("distortion phases recover the screen at a point target") {
  ProbeModel p = probe8();
  Rng rng(21, "screen");
  PhaseScreen s = make_random_screen(0.4, 4.0, 0.25, 1.0, 1.2, rng);
  MediumDescription m;
  m.scatterers.push_back({{0, 0, 20}, {1.0, 0.0}});
  auto raw = sim(m, &s, p);
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-2:0.5:2,y=-2:0.5:2,z=20:0.5:20");
  bs.dmax_mm = 4.0;
  FocusedRMatrix f = beamform(raw, bs);

  CorrectionBasis basis = correction_basis_for(f, Side::Output);
  DistortionMatrix d = distortion(f, basis, Side::Output);
  // Row at the target voxel, FULL aperture law against the ground truth.
  int vox = f.grid.voxel_index(4, 4);
  std::vector<cdouble> row(basis.count());
  for (int o = 0; o < basis.count(); ++o) {
    cdouble v = cdouble(d.blocks[0][static_cast<std::size_t>(vox) * basis.count() + o]);
    row[o] = std::abs(v) > 0 ? v / std::abs(v) : cdouble{1, 0};
  }
  CHECK(circular_correlation(row, screen_law(basis, s), basis.active) > 0.9);
}

TEST_CASE("unaberrated point target: fourier-basis distortion is flat") {
  // Aperture and depth chosen so several angle samples sit inside the
  // geometric receive support and the carrier-frequency angle transform
  // is well conditioned (sqrt(lambda z) below the aperture).
  ProbeModel p = make_grid_probe(16, 16, 0.5, 3.0, 1.8, 4.2, 1.54, deg_to_rad(28.0));
  MediumDescription m;
  m.scatterers.push_back({{0, 0, 30}, {1.0, 0.0}});
  SimulateOptions so;
  so.t_start = 34.0;
  so.t_stop = 45.0;
  auto raw = std::make_shared<ReflectionMatrixRaw>(
      simulate(m, nullptr, p, IlluminationBasis{}, so, 1));
  BeamformSettings bs;
  // 16-point lattice spanning integer k-grid periods, with offsets wide
  // enough to keep every in-grid pair, so the projection onto the angle
  // grid is orthogonality-complete at the central row.
  bs.grid = VoxelGrid::parse("x=-3.5:0.5:4,y=-3.5:0.5:4,z=30:0.5:30");
  bs.dmax_mm = 5.7;
  bs.out_rep = OutputRep::Fourier;
  bs.fourier_downsample = 2;
  FocusedRMatrix f = beamform(raw, bs);
  CorrectionBasis basis = correction_basis_for(f, Side::Output);
  CHECK(basis.kind == CorrectionBasis::Kind::Fourier);
  DistortionMatrix d = distortion(f, basis, Side::Output);
  int vox = f.grid.voxel_index(7, 7);
  // Constant phase over the geometric receive support of the target
  // (angles the aperture actually spans): magnitude-weighted phase
  // coherence |sum D| / sum |D| close to one there.
  double support = 0.5 * p.aperture.x / 30.0 + 0.02;
  cdouble acc{0, 0};
  double mag = 0;
  for (int o = 0; o < basis.count(); ++o) {
    if (norm(basis.samples[o]) > support) continue;
    cdouble v = cdouble(d.blocks[0][static_cast<std::size_t>(vox) * basis.count() + o]);
    acc += v;
    mag += std::abs(v);
  }
  REQUIRE(mag > 0);
  CHECK(std::abs(acc) / mag > 0.95);
}

TEST_CASE("correlation perturbation scales inversely with window cell count") {
  ProbeModel p = probe8();
  const int n_mc = 6;
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-3.75:0.5:3.75,y=-3.75:0.5:3.75,z=18.8:0.3:24.2");
  bs.dmax_mm = 2.0;

  auto corr_for = [&](std::uint64_t seed, const SpatialWindow& w) {
    MediumDescription m;
    m.speckle_regions.push_back({{-5, -5, 18}, {5, 5, 25}, 4.0, 1.0});
    auto raw = sim(m, nullptr, p, seed);
    FocusedRMatrix f = beamform(raw, bs);
    CorrectionBasis basis = correction_basis_for(f, Side::Output);
    DistortionMatrix d = distortion(f, basis, Side::Output);
    return local_correlation(d, w, p);
  };

  // Same transverse footprint, axial extent scaled 3x: the speckle-grain
  // granularity cancels in the ratio.
  double fluct[2] = {0, 0}, cells[2] = {0, 0};
  int idx = 0;
  for (double wz : {1.8, 5.4}) {
    SpatialWindow w{{0, 0, 21.5}, {4.8, 4.8, wz}};
    std::vector<Eigen::MatrixXcd> cs;
    for (int k = 0; k < n_mc; ++k) {
      CorrelationMatrix c = corr_for(100 + k, w);
      cs.push_back(c.C);
      cells[idx] = c.n_cells;
    }
    Eigen::MatrixXcd mean = cs[0];
    for (int k = 1; k < n_mc; ++k) mean += cs[k];
    mean /= n_mc;
    double num = 0;
    for (int k = 0; k < n_mc; ++k) num += (cs[k] - mean).squaredNorm();
    num /= n_mc;
    // Gaussian-speckle moments: var C(o,o') = C(o,o) C(o',o') / N, so the
    // Frobenius fluctuation energy normalized by (tr C)^2 estimates 1/N.
    double tr = mean.real().trace();
    fluct[idx] = num / (tr * tr);
    ++idx;
  }
  // The fluctuation scales as the inverse of the cell count (factor 2).
  double scaling = (fluct[0] / fluct[1]) / (cells[1] / cells[0]);
  CHECK(scaling > 0.5);
  CHECK(scaling < 2.0);
  // Absolute level agrees with 1/N_W up to the speckle-cell convention
  // (pulse-echo grains are finer than the one-way resolution cell).
  for (int k = 0; k < 2; ++k) {
    CHECK(fluct[k] * cells[k] > 0.1);
    CHECK(fluct[k] * cells[k] < 4.0);
  }
}

TEST_CASE("apply/involution and single-step recovery on a phase screen") {
  ProbeModel p = probe8();
  Rng rng(31, "screen");
  PhaseScreen s = make_random_screen(0.4, 4.0, 0.25, 0.8, 1.5, rng);
  MediumDescription m;
  m.speckle_regions.push_back({{-4.5, -4.5, 19}, {4.5, 4.5, 23}, 4.0, 1.0});
  auto raw = sim(m, &s, p, 17);
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-3.5:0.5:3.5,y=-3.5:0.5:3.5,z=20:0.4:22");
  bs.dmax_mm = 3.0;
  FocusedRMatrix f = beamform(raw, bs);

  // Involution: applying a law then its conjugate restores the matrix.
  CorrectionBasis basis = correction_basis_for(f, Side::Output);
  std::vector<cdouble> law = screen_law(basis, s);
  std::vector<cdouble> conj_law(law.size());
  for (std::size_t i = 0; i < law.size(); ++i) conj_law[i] = std::conj(law[i]);
  FocusedRMatrix f1 = apply_phase_law_uniform(f, law, Side::Output);
  FocusedRMatrix f2 = apply_phase_law_uniform(f1, conj_law, Side::Output);
  double num = 0, den = 0;
  for (int zi = 0; zi < f.n_depths(); ++zi)
    for (std::size_t k = 0; k < f.blocks[zi].size(); ++k) {
      num += std::norm(cdouble(f2.blocks[zi][k]) - cdouble(f.blocks[zi][k]));
      den += std::norm(cdouble(f.blocks[zi][k]));
    }
  CHECK(std::sqrt(num / den) < 1e-6);

  // One full-field correction step recovers the screen law decently and
  // narrows the averaged RPSF.
  MultiscaleOptions opts;
  opts.eps_stop = 2.0;  // keep every window at this small desk scale
  auto schedule = parse_schedule("1x1:7,3");
  MultiscaleResult res = multiscale_correct(f, schedule, opts);
  REQUIRE(res.estimate.steps.size() == 1);
  const WindowLaw& wl = res.estimate.steps[0].windows[0];
  REQUIRE(!wl.law_out.empty());
  CHECK(circular_correlation(wl.law_out, law, basis.active) > 0.8);

  SpatialWindow w{{0, 0, 21}, {6, 6, 2}};
  RpsfMap before = local_rpsf_window(f, w);
  RpsfMap after = local_rpsf_window(res.corrected, w);
  ResolutionEstimate rb = resolution(before);
  ResolutionEstimate ra = resolution(after);
  REQUIRE(ra.resolved);
  double drho0 = diffraction_limit(p, 21.0);
  if (rb.resolved) CHECK(ra.radius_mm < rb.radius_mm);
  CHECK(ra.radius_mm < 1.4 * drho0);
  // The confocal peak never degrades on the oracle suite.
  CHECK(after.peak() >= 0.95 * before.peak());
}

TEST_CASE("multiscale validates schedules") {
  ProbeModel p = probe8();
  MediumDescription m;
  m.scatterers.push_back({{0, 0, 21}, {1.0, 0.0}});
  auto raw = sim(m, nullptr, p);
  BeamformSettings bs;
  bs.grid = VoxelGrid::parse("x=-1:0.5:1,y=-1:0.5:1,z=21:0.5:21");
  bs.dmax_mm = 1.0;
  FocusedRMatrix f = beamform(raw, bs);
  MultiscaleOptions opts;
  CHECK_THROWS_AS(multiscale_correct(f, {}, opts), ContractError);
  // Growing windows violate the monotone-shrink precondition.
  auto growing = parse_schedule("1x1:4,2;1x1:6,2");
  CHECK_THROWS_AS(multiscale_correct(f, growing, opts), ContractError);
}
