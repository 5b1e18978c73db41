#include "umi/correct.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "umi/parallel.hpp"

namespace umi {

int CorrectionBasis::active_count() const {
  int n = 0;
  for (auto a : active) n += a ? 1 : 0;
  return n;
}

void CorrectionBasis::validate() const {
  if (samples.empty()) throw ContractError("correction basis is empty");
  if (active.size() != samples.size())
    throw ContractError("correction basis mask size mismatch");
  if (active_count() <= 0) throw ContractError("correction basis has no active samples");
  if (anchor < 0 || anchor >= count() || !active[anchor])
    throw ContractError("correction basis anchor must be active");
  if (!(kc > 0)) throw ContractError("correction basis needs a positive wavenumber");
}

namespace {

int nearest_sample(const std::vector<Vec2>& pts, const std::vector<std::uint8_t>& act,
                   Vec2 target) {
  int best = -1;
  double best_d = 1e300;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!act[i]) continue;
    double d = norm(pts[i] - target);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

bool is_linear(const FocusedRMatrix& f) { return f.linear != nullptr && f.grid.nx == 1; }

}  // namespace

CorrectionBasis correction_basis_for(const FocusedRMatrix& f, Side side) {
  if (!f.raw) throw ContractError("focused matrix lacks raw provenance");
  const ReflectionMatrixRaw& raw = *f.raw;
  CorrectionBasis b;
  b.kc = two_pi * f.fc / f.c0;

  if (is_linear(f)) {
    // Emulated linear array: distinct theta_y (input) or u_y (output).
    if (side == Side::Input) {
      ChannelGroups g = group_plane_wave_theta_y(raw);
      b.kind = CorrectionBasis::Kind::Fourier;
      for (double th : g.values) b.samples.push_back({0.0, std::sin(th)});
    } else {
      ChannelGroups g = group_elements_u_y(raw.probe);
      b.kind = CorrectionBasis::Kind::Transducer;
      for (double uy : g.values) b.samples.push_back({f.linear->x_f, uy});
    }
    b.active.assign(b.samples.size(), 1);
    b.anchor = nearest_sample(b.samples, b.active,
                              side == Side::Input ? Vec2{0, 0} : Vec2{f.linear->x_f, 0});
    b.validate();
    return b;
  }

  if (side == Side::Input) {
    if (raw.basis_in.kind == IlluminationBasis::Kind::PlaneWave) {
      b.kind = CorrectionBasis::Kind::Fourier;
      for (const auto& a : raw.basis_in.angles)
        b.samples.push_back({std::sin(a.x), std::sin(a.y)});
      b.active.assign(b.samples.size(), 1);
    } else {
      b.kind = CorrectionBasis::Kind::Transducer;
      b.samples = raw.probe.element_positions;
      b.active = raw.probe.element_active;
    }
  } else {
    if (f.receive.rep == OutputRep::Fourier) {
      b.kind = CorrectionBasis::Kind::Fourier;
      for (const auto& a : f.receive.angles)
        b.samples.push_back({std::sin(a.x), std::sin(a.y)});
      b.active.assign(b.samples.size(), 1);
    } else {
      b.kind = CorrectionBasis::Kind::Transducer;
      b.samples = raw.probe.element_positions;
      b.active = raw.probe.element_active;
    }
  }
  b.anchor = nearest_sample(b.samples, b.active, {0, 0});
  b.validate();
  return b;
}

cdouble t0_model(const CorrectionBasis& basis, int sample, const Vec3& r) {
  const Vec2& o = basis.samples[sample];
  if (basis.kind == CorrectionBasis::Kind::Fourier) {
    // o holds (sin tx, sin ty); transverse phase only, the depth term is
    // common to all voxels of a plane and cancels in the Hadamard.
    return std::polar(1.0, -basis.kc * (r.x * o.x + r.y * o.y));
  }
  double dx = r.x - o.x, dy = r.y - o.y;
  double d = std::sqrt(dx * dx + dy * dy + r.z * r.z);
  return std::polar(r.z / (4.0 * pi * d * d), -basis.kc * d);
}

DistortionMatrix distortion(const FocusedRMatrix& f, const CorrectionBasis& basis,
                            Side side, int threads) {
  basis.validate();
  DistortionMatrix d;
  d.grid = f.grid;
  d.basis = basis;
  d.side = side;
  d.blocks.resize(f.n_depths());

  const int n_o = basis.count();
  const int n_vox = f.grid.transverse_count();
  const int n_off = f.n_offsets();

  for (int zi = 0; zi < f.n_depths(); ++zi) {
    const double z = f.grid.z[zi];
    // Geometric model per (voxel, sample).
    std::vector<cdouble> t0(static_cast<std::size_t>(n_vox) * n_o);
    parallel_for(n_vox, threads, [&](std::size_t vox) {
      Vec2 xy = f.grid.voxel_xy(static_cast<int>(vox));
      for (int o = 0; o < n_o; ++o)
        t0[vox * n_o + o] = t0_model(basis, o, {xy.x, xy.y, z});
    });

    auto& block = d.blocks[zi];
    block.assign(static_cast<std::size_t>(n_vox) * n_o, cfloat{0, 0});
    parallel_for_chunked(n_vox, threads, [&](std::size_t lo, std::size_t hi) {
      std::vector<cdouble> acc(n_o);
      for (std::size_t vox = lo; vox < hi; ++vox) {
        std::fill(acc.begin(), acc.end(), cdouble{0, 0});
        const int ix = static_cast<int>(vox) % f.grid.nx;
        const int iy = static_cast<int>(vox) / f.grid.nx;
        for (int oi = 0; oi < n_off; ++oi) {
          const auto [ox, oy] = f.offsets.steps[oi];
          const int jx = ix + ox, jy = iy + oy;
          if (!f.grid.in_bounds(jx, jy)) continue;
          const std::size_t other = f.grid.voxel_index(jx, jy);
          cdouble r;
          if (side == Side::Output) {
            r = cdouble(f.at(zi, static_cast<int>(vox), oi));
          } else {
            // R(rho_in = other, rho_out = vox)
            int mi = f.offsets.mirror_index(oi);
            r = cdouble(f.at(zi, static_cast<int>(other), mi));
          }
          if (r == cdouble{0, 0}) continue;
          const cdouble* t0_row = t0.data() + other * n_o;
          for (int o = 0; o < n_o; ++o) acc[o] += r * t0_row[o];
        }
        const cdouble* t0_self = t0.data() + vox * n_o;
        cfloat* out = block.data() + vox * n_o;
        for (int o = 0; o < n_o; ++o) {
          cdouble v = std::conj(t0_self[o]) * acc[o];
          out[o] = cfloat{static_cast<float>(v.real()), static_cast<float>(v.imag())};
        }
      }
    });
  }
  return d;
}

CorrelationMatrix local_correlation(const DistortionMatrix& d, const SpatialWindow& w,
                                    const ProbeModel& probe) {
  w.validate();
  CorrelationMatrix c;
  c.window = w;
  c.active = d.basis.active;
  c.anchor = d.basis.anchor;
  c.n_cells = resolution_cell_count(w, probe);
  if (c.n_cells < 4.0)
    throw ContractError("window holds fewer than 4 resolution cells");

  const int n_o = d.basis.count();
  std::vector<std::pair<int, int>> rows;  // (zi, vox)
  for (std::size_t zi = 0; zi < d.grid.z.size(); ++zi) {
    if (std::abs(d.grid.z[zi] - w.center.z) >= 0.5 * w.extent.z) continue;
    for (int vox = 0; vox < d.grid.transverse_count(); ++vox) {
      Vec2 xy = d.grid.voxel_xy(vox);
      if (std::abs(xy.x - w.center.x) < 0.5 * w.extent.x &&
          std::abs(xy.y - w.center.y) < 0.5 * w.extent.y)
        rows.push_back({static_cast<int>(zi), vox});
    }
  }
  if (rows.empty()) throw ContractError("window contains no voxels");
  c.n_samples = static_cast<int>(rows.size());

  Eigen::MatrixXcd dw(n_o, rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const cfloat* row = d.row(rows[k].first, rows[k].second);
    for (int o = 0; o < n_o; ++o) dw(o, k) = cdouble(row[o]);
  }
  c.C = (dw * dw.adjoint()) / static_cast<double>(rows.size());
  // Mask inactive samples and enforce hermiticity against roundoff.
  for (int o = 0; o < n_o; ++o)
    if (!c.active[o]) {
      c.C.row(o).setZero();
      c.C.col(o).setZero();
    }
  c.C = 0.5 * (c.C + c.C.adjoint()).eval();
  return c;
}

IprResult iterative_phase_reversal(const CorrelationMatrix& c,
                                   const std::vector<cdouble>& initial,
                                   double tol, int max_iter) {
  const int n = static_cast<int>(c.C.rows());
  int n_act = 0;
  for (auto a : c.active) n_act += a ? 1 : 0;
  if (n_act == 0) throw ContractError("correlation matrix has no active samples");

  Eigen::VectorXcd x(n);
  if (initial.empty()) {
    x.setOnes();
  } else {
    if (static_cast<int>(initial.size()) != n)
      throw ContractError("initial law size mismatch");
    for (int i = 0; i < n; ++i) x(i) = initial[i];
  }
  for (int i = 0; i < n; ++i)
    if (!c.active[i]) x(i) = 1.0;

  IprResult res;
  Eigen::VectorXcd y(n);
  for (int it = 0; it < max_iter; ++it) {
    y = c.C * x;
    res.gain_history.push_back(y.norm());
    cdouble overlap{0, 0};
    Eigen::VectorXcd xn = x;
    for (int i = 0; i < n; ++i) {
      if (!c.active[i]) continue;
      double m = std::abs(y(i));
      if (m > 0) xn(i) = y(i) / m;
      overlap += std::conj(x(i)) * xn(i);
    }
    x = xn;
    res.iterations = it + 1;
    if (1.0 - std::abs(overlap) / n_act < tol) {
      res.converged = true;
      break;
    }
  }

  // Pin the global phase at the anchor sample.
  cdouble g = x(c.anchor);
  double m = std::abs(g);
  if (m > 0) x *= std::conj(g) / m;
  res.law.resize(n);
  for (int i = 0; i < n; ++i) res.law[i] = c.active[i] ? x(i) : cdouble{1, 0};
  return res;
}

EigenAnalysis svd_baseline(const CorrelationMatrix& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(c.C);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");
  const int n = static_cast<int>(c.C.rows());
  EigenAnalysis out;
  out.eigenvalues.resize(n);
  for (int i = 0; i < n; ++i)
    out.eigenvalues[i] = std::max(0.0, solver.eigenvalues()(n - 1 - i));
  Eigen::VectorXcd u = solver.eigenvectors().col(n - 1);
  cdouble g = u(c.anchor);
  if (std::abs(g) > 0) u *= std::conj(g) / std::abs(g);
  out.first.resize(n);
  for (int i = 0; i < n; ++i) out.first[i] = u(i);
  double s1 = 0, s2 = 0;
  for (double v : out.eigenvalues) {
    s1 += v;
    s2 += v * v;
  }
  out.effective_rank = s2 > 0 ? s1 * s1 / s2 : 0.0;
  return out;
}

namespace {

cdouble anchor_phase(const std::vector<cdouble>& law, int anchor) {
  cdouble g = law[anchor];
  double m = std::abs(g);
  return m > 0 ? std::conj(g) / m : cdouble{1, 0};
}

}  // namespace

ReciprocityScore reciprocity_score(const std::vector<cdouble>& law_in,
                                   const std::vector<cdouble>& law_out,
                                   const std::vector<std::uint8_t>& active,
                                   int anchor) {
  if (law_in.size() != law_out.size() || law_in.size() != active.size())
    throw ContractError("reciprocity score needs laws on the same basis");
  cdouble gi = anchor_phase(law_in, anchor);
  cdouble go = anchor_phase(law_out, anchor);
  cdouble acc{0, 0};
  int n_act = 0;
  for (std::size_t i = 0; i < law_in.size(); ++i) {
    if (!active[i]) continue;
    acc += std::conj(law_in[i] * gi) * (law_out[i] * go);
    ++n_act;
  }
  ReciprocityScore s;
  s.scalar = acc.real() / std::max(1, n_act);
  s.eps = 2.0 * (1.0 - s.scalar);
  return s;
}

ReciprocityScore reciprocity_score(const std::vector<cdouble>& law_in,
                                   const std::vector<cdouble>& law_out,
                                   const CorrelationMatrix& basis_info) {
  return reciprocity_score(law_in, law_out, basis_info.active, basis_info.anchor);
}

double circular_correlation(const std::vector<cdouble>& a,
                            const std::vector<cdouble>& b,
                            const std::vector<std::uint8_t>& active) {
  if (a.size() != b.size() || a.size() != active.size())
    throw ContractError("circular correlation needs equal-size laws");
  cdouble acc{0, 0};
  int n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!active[i]) continue;
    acc += std::conj(a[i]) * b[i];
    ++n;
  }
  return n ? std::abs(acc) / n : 0.0;
}

double coherence_factor(const std::vector<cdouble>& law,
                        const std::vector<std::uint8_t>& active) {
  if (law.size() != active.size()) throw ContractError("law/mask size mismatch");
  cdouble acc{0, 0};
  int n = 0;
  for (std::size_t i = 0; i < law.size(); ++i) {
    if (!active[i]) continue;
    acc += law[i];
    ++n;
  }
  if (n == 0) return 0.0;
  double strehl = std::norm(acc) / (static_cast<double>(n) * n);
  return (4.0 / 9.0) * strehl;
}

std::vector<ScheduleStep> parse_schedule(const std::string& spec) {
  std::vector<ScheduleStep> out;
  std::istringstream in(spec);
  std::string token;
  while (std::getline(in, token, ';')) {
    if (token.find_first_not_of(" \t") == std::string::npos) continue;
    ScheduleStep s;
    char x = 0, colon = 0, comma = 0;
    std::istringstream ts(token);
    if (!(ts >> s.nx >> x >> s.ny >> colon >> s.wx >> comma >> s.wz) ||
        x != 'x' || colon != ':' || comma != ',')
      throw ContractError("bad schedule step: " + token);
    s.wy = s.wx;
    if (s.nx < 1 || s.ny < 1 || !(s.wx > 0) || !(s.wz > 0))
      throw ContractError("degenerate schedule step: " + token);
    out.push_back(s);
  }
  if (out.empty()) throw ContractError("schedule is empty");
  return out;
}

std::string schedule_string(const std::vector<ScheduleStep>& schedule) {
  std::ostringstream out;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (i) out << ";";
    out << schedule[i].nx << "x" << schedule[i].ny << ":" << schedule[i].wx
        << "," << schedule[i].wz;
  }
  return out.str();
}

LawField blend_window_laws(const StepEstimate& step, const VoxelGrid& grid,
                           int n_channels, Side side) {
  LawField field;
  field.n_channels = n_channels;
  field.x0 = grid.x0;
  field.y0 = grid.y0;
  field.pitch = grid.pitch;
  field.nx = grid.nx;
  field.ny = grid.ny;
  field.tables.resize(grid.z.size());

  auto hat = [](double d, double half) {
    return half > 0 ? std::max(0.0, 1.0 - std::abs(d) / half) : (std::abs(d) <= 0 ? 1.0 : 0.0);
  };

  for (std::size_t zi = 0; zi < grid.z.size(); ++zi) {
    auto& table = field.tables[zi];
    table.assign(static_cast<std::size_t>(grid.transverse_count()) * n_channels,
                 cfloat{1, 0});
    double z = grid.z[zi];
    for (int vox = 0; vox < grid.transverse_count(); ++vox) {
      Vec2 xy = grid.voxel_xy(vox);
      std::vector<cdouble> acc(n_channels, cdouble{0, 0});
      double wsum = 0;
      for (const auto& wl : step.windows) {
        double w = hat(xy.x - wl.window.center.x, 0.5 * wl.window.extent.x) *
                   hat(xy.y - wl.window.center.y, 0.5 * wl.window.extent.y) *
                   hat(z - wl.window.center.z, 0.5 * wl.window.extent.z);
        if (w <= 0) continue;
        wsum += w;
        const auto& law = side == Side::Input ? wl.law_in : wl.law_out;
        if (!wl.applied || law.empty()) {
          for (int ch = 0; ch < n_channels; ++ch) acc[ch] += w;  // flat
        } else {
          for (int ch = 0; ch < n_channels; ++ch) acc[ch] += w * law[ch];
        }
      }
      cfloat* out = table.data() + static_cast<std::size_t>(vox) * n_channels;
      if (wsum <= 0) continue;  // stays flat
      for (int ch = 0; ch < n_channels; ++ch) {
        double m = std::abs(acc[ch]);
        cdouble v = m > 1e-12 ? acc[ch] / m : cdouble{1, 0};
        out[ch] = cfloat{static_cast<float>(v.real()), static_cast<float>(v.imag())};
      }
    }
  }
  return field;
}

LawField compose_law_fields(const LawField& a, const LawField& b) {
  if (a.flat()) return b;
  if (b.flat()) return a;
  if (a.n_channels != b.n_channels || a.tables.size() != b.tables.size() ||
      a.nx != b.nx || a.ny != b.ny)
    throw ContractError("law fields have mismatched shapes");
  LawField out = a;
  for (std::size_t zi = 0; zi < out.tables.size(); ++zi)
    for (std::size_t k = 0; k < out.tables[zi].size(); ++k) {
      cdouble v = cdouble(a.tables[zi][k]) * cdouble(b.tables[zi][k]);
      double m = std::abs(v);
      if (m > 1e-12) v /= m;
      out.tables[zi][k] = cfloat{static_cast<float>(v.real()), static_cast<float>(v.imag())};
    }
  return out;
}

namespace {

// Group-level law field expanded onto raw channels (linear emulation).
LawField expand_group_field(const LawField& gf, const ChannelGroups& groups,
                            int n_channels) {
  if (gf.flat()) return gf;
  std::vector<int> group_of(n_channels, -1);
  for (std::size_t g = 0; g < groups.members.size(); ++g)
    for (int ch : groups.members[g]) group_of[ch] = static_cast<int>(g);
  LawField out;
  out.n_channels = n_channels;
  out.x0 = gf.x0;
  out.y0 = gf.y0;
  out.pitch = gf.pitch;
  out.nx = gf.nx;
  out.ny = gf.ny;
  out.tables.resize(gf.tables.size());
  std::size_t n_vox = static_cast<std::size_t>(gf.nx) * gf.ny;
  for (std::size_t zi = 0; zi < gf.tables.size(); ++zi) {
    out.tables[zi].assign(n_vox * n_channels, cfloat{1, 0});
    for (std::size_t vox = 0; vox < n_vox; ++vox)
      for (int ch = 0; ch < n_channels; ++ch)
        if (group_of[ch] >= 0)
          out.tables[zi][vox * n_channels + ch] =
              gf.tables[zi][vox * gf.n_channels + group_of[ch]];
  }
  return out;
}

FocusedRMatrix rebeamform(const FocusedRMatrix& f, const LawField& law_in,
                          const LawField& law_out, int threads) {
  if (!f.raw) throw ContractError("re-beamforming needs the raw matrix");
  if (is_linear(f)) {
    LinearEmulationSettings s;
    s.x_f = f.linear->x_f;
    s.z_f = f.linear->z_f;
    s.y0 = f.grid.y0;
    s.y_pitch = f.grid.pitch;
    s.ny = f.grid.ny;
    s.z = f.grid.z;
    s.dmax_mm = f.offsets.dmax;
    s.threads = threads;
    LawField in_ch = expand_group_field(law_in, group_plane_wave_theta_y(*f.raw),
                                        f.raw->n_in);
    LawField out_ch = expand_group_field(law_out, group_elements_u_y(f.raw->probe),
                                         f.raw->n_out);
    FocusedRMatrix g = emulate_linear_array(f.raw, s, &in_ch, &out_ch);
    // Keep the group-level fields as the provenance of record.
    g.law_in = law_in;
    g.law_out = law_out;
    return g;
  }
  BeamformSettings s = f.settings;
  s.threads = threads;
  return beamform(f.raw, s, nullptr, &law_in, &law_out, &f.receive);
}

int side_channel_count(const FocusedRMatrix& f, Side side) {
  if (is_linear(f)) {
    return side == Side::Input
               ? static_cast<int>(group_plane_wave_theta_y(*f.raw).values.size())
               : static_cast<int>(group_elements_u_y(f.raw->probe).values.size());
  }
  return side == Side::Input ? f.raw->n_in : f.receive.channel_count(f.raw->probe);
}

}  // namespace

FocusedRMatrix apply_phase_law(const FocusedRMatrix& f, const StepEstimate& laws,
                               Side side, int threads) {
  int n_ch = side_channel_count(f, side);
  for (const auto& w : laws.windows) {
    const auto& law = side == Side::Input ? w.law_in : w.law_out;
    if (!law.empty() && static_cast<int>(law.size()) != n_ch)
      throw ContractError("law size does not match the matrix basis");
  }
  LawField field = blend_window_laws(laws, f.grid, n_ch, side);
  LawField in = side == Side::Input ? compose_law_fields(f.law_in, field) : f.law_in;
  LawField out = side == Side::Output ? compose_law_fields(f.law_out, field) : f.law_out;
  return rebeamform(f, in, out, threads);
}

FocusedRMatrix apply_phase_law_uniform(const FocusedRMatrix& f,
                                       const std::vector<cdouble>& law,
                                       Side side, int threads) {
  StepEstimate step;
  step.step = ScheduleStep{1, 1, 1e9, 1e9, 1e9};
  WindowLaw wl;
  wl.window = SpatialWindow{{0, 0, 0.5 * (f.grid.z.front() + f.grid.z.back())},
                            {1e9, 1e9, 1e9}};
  wl.applied = true;
  if (side == Side::Input)
    wl.law_in = law;
  else
    wl.law_out = law;
  step.windows.push_back(wl);
  return apply_phase_law(f, step, side, threads);
}

MultiscaleResult multiscale_correct(const FocusedRMatrix& f,
                                    const std::vector<ScheduleStep>& schedule,
                                    const MultiscaleOptions& options) {
  if (schedule.empty()) throw ContractError("schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const auto& s = schedule[i];
    if (s.nx < 1 || s.ny < 1 || !(s.wx > 0) || !(s.wy > 0) || !(s.wz > 0))
      throw ContractError("degenerate schedule step");
    if (i > 0 && (s.wx > schedule[i - 1].wx + 1e-9 || s.wy > schedule[i - 1].wy + 1e-9 ||
                  s.wz > schedule[i - 1].wz + 1e-9))
      throw ContractError("schedule windows must shrink monotonically");
  }
  if (!f.raw) throw ContractError("multiscale correction needs raw provenance");

  MultiscaleResult res;
  res.estimate.basis_in = correction_basis_for(f, Side::Input);
  res.estimate.basis_out = correction_basis_for(f, Side::Output);
  res.estimate.schedule_id = schedule_string(schedule);
  res.estimate.total_in = f.law_in;
  res.estimate.total_out = f.law_out;

  const CorrectionBasis& bin = res.estimate.basis_in;
  const CorrectionBasis& bout = res.estimate.basis_out;
  FocusedRMatrix cur = f;
  const double gate = 1.0 - 0.5 * options.eps_stop;

  auto estimate_side = [&](const FocusedRMatrix& mat, const CorrectionBasis& basis,
                           Side side, std::vector<SpatialWindow>& windows,
                           StepEstimate& step) {
    FocusedRMatrix filtered;
    const FocusedRMatrix* src = &mat;
    if (options.use_filter) {
      filtered = adaptive_confocal_filter(mat, options.filter_scale);
      src = &filtered;
    }
    DistortionMatrix d = distortion(*src, basis, side, options.threads);
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
      WindowLaw& wl = step.windows[wi];
      try {
        CorrelationMatrix c = local_correlation(d, windows[wi], f.probe);
        wl.n_cells = c.n_cells;
        IprResult ipr = iterative_phase_reversal(c);
        if (side == Side::Input) {
          wl.law_in = std::move(ipr.law);
          wl.iterations_in = ipr.iterations;
          wl.converged_in = ipr.converged;
        } else {
          wl.law_out = std::move(ipr.law);
          wl.iterations_out = ipr.iterations;
          wl.converged_out = ipr.converged;
        }
      } catch (const ContractError&) {
        // Window too small or empty: leave the law flat.
      }
    }
  };

  for (const auto& sched : schedule) {
    std::vector<SpatialWindow> windows =
        window_layout(cur.grid, sched.nx, sched.ny, sched.wx, sched.wy, sched.wz);
    StepEstimate step;
    step.step = sched;
    step.windows.resize(windows.size());
    for (std::size_t wi = 0; wi < windows.size(); ++wi)
      step.windows[wi].window = windows[wi];

    estimate_side(cur, bout, Side::Output, windows, step);

    if (options.sequential) {
      // Apply the output laws before estimating the input side.
      StepEstimate tentative = step;
      for (auto& wl : tentative.windows) wl.applied = !wl.law_out.empty();
      LawField out_try = compose_law_fields(
          res.estimate.total_out,
          blend_window_laws(tentative, cur.grid, bout.count(), Side::Output));
      FocusedRMatrix mid = rebeamform(cur, res.estimate.total_in, out_try,
                                      options.threads);
      estimate_side(mid, bin, Side::Input, windows, step);
    } else {
      estimate_side(cur, bin, Side::Input, windows, step);
    }

    for (auto& wl : step.windows) {
      if (wl.law_in.empty() || wl.law_out.empty()) {
        wl.applied = false;
        continue;
      }
      // Reciprocity gate between the step's input and output laws. For the
      // emulated-linear case the bases differ, so the gate is skipped.
      if (bin.count() == bout.count() && bin.kind == bout.kind) {
        ReciprocityScore score =
            reciprocity_score(wl.law_in, wl.law_out, bin.active, bin.anchor);
        wl.eps = score.eps;
        wl.scalar = score.scalar;
        wl.applied = score.scalar >= gate;
      } else {
        wl.applied = true;
      }
    }

    res.estimate.total_out = compose_law_fields(
        res.estimate.total_out,
        blend_window_laws(step, cur.grid, bout.count(), Side::Output));
    res.estimate.total_in = compose_law_fields(
        res.estimate.total_in,
        blend_window_laws(step, cur.grid, bin.count(), Side::Input));
    cur = rebeamform(cur, res.estimate.total_in, res.estimate.total_out,
                     options.threads);
    res.estimate.steps.push_back(std::move(step));
  }

  res.corrected = std::move(cur);
  return res;
}

}  // namespace umi
