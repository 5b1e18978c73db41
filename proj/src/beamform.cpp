#include "umi/beamform.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <map>

#include "umi/parallel.hpp"

namespace umi {

namespace {

constexpr cfloat kZero{0.f, 0.f};

struct ChannelGeometry {
  // Either transducer elements (positions, active) or plane-wave angles.
  bool plane_wave = false;
  const std::vector<Vec2>* points = nullptr;  // element positions
  const std::vector<std::uint8_t>* active = nullptr;
  const std::vector<Vec2>* angles = nullptr;
  int count() const {
    return plane_wave ? static_cast<int>(angles->size())
                      : static_cast<int>(points->size());
  }
};

// Delay (us) from channel ch to focal point (x, y, z).
inline double channel_delay(const ChannelGeometry& g, int ch, double x, double y,
                            double z, double c0) {
  if (g.plane_wave) {
    const Vec2& a = (*g.angles)[ch];
    double sx = std::sin(a.x), sy = std::sin(a.y);
    double cz = std::sqrt(std::max(0.0, 1.0 - sx * sx - sy * sy));
    return (x * sx + y * sy + z * cz) / c0;
  }
  const Vec2& u = (*g.points)[ch];
  double dx = x - u.x, dy = y - u.y;
  return std::sqrt(dx * dx + dy * dy + z * z) / c0;
}

// true when the focal point lies inside the channel's directivity cone.
inline bool channel_apod(const ChannelGeometry& g, int ch, double x, double y,
                         double z, double cos_theta_max) {
  if (g.plane_wave) return true;
  if (g.active && !(*g.active)[ch]) return false;
  const Vec2& u = (*g.points)[ch];
  double dx = x - u.x, dy = y - u.y;
  double d = std::sqrt(dx * dx + dy * dy + z * z);
  return z / d >= cos_theta_max;
}

struct SideTables {
  int n_ch = 0;
  std::vector<double> delay;    // [point * n_ch + ch]
  std::vector<cfloat> weight;   // carrier rotation * conj(law), 0 if outside cone
  std::vector<std::uint8_t> covered;  // per point: any non-zero weight
};

// Builds delay / weight tables for one depth plane over a lattice of
// points. Lattice indices run (iy, ix) in [0, ny) x [0, nx) with origin
// (x0, y0); law lookups are clamped to the law field's own lattice.
SideTables build_tables(const ChannelGeometry& g, double z, double x0, double y0,
                        double pitch, int nx, int ny, double c0, double fc,
                        double cos_theta_max, const LawField* law, int zi,
                        int threads) {
  SideTables t;
  t.n_ch = g.count();
  std::size_t n_pts = static_cast<std::size_t>(nx) * ny;
  t.delay.resize(n_pts * t.n_ch);
  t.weight.resize(n_pts * t.n_ch);
  t.covered.assign(n_pts, 0);
  parallel_for_chunked(n_pts, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      int ix = static_cast<int>(p) % nx;
      int iy = static_cast<int>(p) / nx;
      double x = x0 + ix * pitch, y = y0 + iy * pitch;
      bool any = false;
      for (int ch = 0; ch < t.n_ch; ++ch) {
        double d = channel_delay(g, ch, x, y, z, c0);
        t.delay[p * t.n_ch + ch] = d;
        cfloat w = kZero;
        if (channel_apod(g, ch, x, y, z, cos_theta_max)) {
          cdouble ww = std::polar(1.0, two_pi * fc * d);
          if (law && !law->flat()) ww *= std::conj(law->value(zi, x, y, ch));
          w = cfloat{static_cast<float>(ww.real()), static_cast<float>(ww.imag())};
          any = true;
        }
        t.weight[p * t.n_ch + ch] = w;
      }
      t.covered[p] = any ? 1 : 0;
    }
  });
  return t;
}

ChannelGeometry input_geometry(const ReflectionMatrixRaw& raw) {
  ChannelGeometry g;
  if (raw.basis_in.kind == IlluminationBasis::Kind::PlaneWave) {
    g.plane_wave = true;
    g.angles = &raw.basis_in.angles;
  } else {
    g.points = &raw.probe.element_positions;
    g.active = &raw.probe.element_active;
  }
  return g;
}

ChannelGeometry output_geometry(const ReflectionMatrixRaw& raw, const ReceiveRep& rep) {
  ChannelGeometry g;
  if (rep.rep == OutputRep::Fourier) {
    g.plane_wave = true;
    g.angles = &rep.angles;
  } else {
    g.points = &raw.probe.element_positions;
    g.active = &raw.probe.element_active;
  }
  return g;
}

}  // namespace

ReceiveRep prepare_receive_rep(const ReflectionMatrixRaw& raw,
                               const BeamformSettings& settings) {
  ReceiveRep rep;
  rep.rep = settings.out_rep;
  if (rep.rep == OutputRep::Transducer) return rep;

  rep.angles = settings.fourier_angles;
  if (rep.angles.empty()) {
    IlluminationBasis grid = plane_wave_grid(raw.probe);
    if (settings.fourier_downsample > 1)
      grid = downsample_angles(grid, settings.fourier_downsample);
    rep.angles = grid.angles;
  }
  int n_theta = static_cast<int>(rep.angles.size());
  double kc = two_pi * raw.fc / raw.probe.c0;  // rad/mm
  int n_act = raw.probe.active_count();

  auto buf = std::make_shared<std::vector<cfloat>>(
      static_cast<std::size_t>(raw.n_in) * n_theta * raw.n_t, kZero);
  // Receive aperture projected onto the angle grid at the carrier.
  std::vector<cdouble> phase(static_cast<std::size_t>(n_theta) * raw.n_out);
  for (int a = 0; a < n_theta; ++a) {
    double sx = std::sin(rep.angles[a].x), sy = std::sin(rep.angles[a].y);
    for (int u = 0; u < raw.n_out; ++u) {
      const Vec2& e = raw.probe.element_positions[u];
      phase[static_cast<std::size_t>(a) * raw.n_out + u] =
          raw.probe.element_active[u]
              ? std::polar(1.0 / n_act, -kc * (e.x * sx + e.y * sy))
              : cdouble{0, 0};
    }
  }
  parallel_for(raw.n_in, settings.threads, [&](std::size_t i) {
    std::vector<cdouble> acc(raw.n_t);
    for (int a = 0; a < n_theta; ++a) {
      std::fill(acc.begin(), acc.end(), cdouble{0, 0});
      for (int u = 0; u < raw.n_out; ++u) {
        cdouble ph = phase[static_cast<std::size_t>(a) * raw.n_out + u];
        if (ph == cdouble{0, 0}) continue;
        const cfloat* tr = raw.trace(static_cast<int>(i), u);
        for (int n = 0; n < raw.n_t; ++n) acc[n] += ph * cdouble(tr[n]);
      }
      cfloat* dst = buf->data() +
                    (static_cast<std::size_t>(i) * n_theta + a) * raw.n_t;
      for (int n = 0; n < raw.n_t; ++n)
        dst[n] = cfloat{static_cast<float>(acc[n].real()),
                        static_cast<float>(acc[n].imag())};
    }
  });
  rep.transformed = std::move(buf);
  return rep;
}

FocusedRMatrix beamform(std::shared_ptr<const ReflectionMatrixRaw> raw_ptr,
                        const BeamformSettings& settings,
                        BeamformDiagnostics* diagnostics,
                        const LawField* law_in, const LawField* law_out,
                        const ReceiveRep* reuse_receive) {
  if (!raw_ptr) throw ContractError("beamform needs a raw matrix");
  const ReflectionMatrixRaw& raw = *raw_ptr;
  raw.validate();
  settings.grid.validate();

  FocusedRMatrix f;
  f.grid = settings.grid;
  f.offsets = OffsetTable::build(settings.grid.pitch, settings.dmax_mm);
  f.probe = raw.probe;
  f.fc = raw.fc;
  f.c0 = raw.probe.c0;
  f.raw = raw_ptr;
  f.settings = settings;
  f.receive = reuse_receive ? *reuse_receive : prepare_receive_rep(raw, settings);
  if (law_in) f.law_in = *law_in;
  if (law_out) f.law_out = *law_out;

  BeamformDiagnostics diag;
  if (raw.basis_in.kind == IlluminationBasis::Kind::PlaneWave &&
      raw.basis_in.angular_pitch > 0) {
    diag.aliasing_bound_mm = raw.probe.wavelength() / (2.0 * raw.basis_in.angular_pitch);
    diag.aliasing_risk = settings.dmax_mm > diag.aliasing_bound_mm;
  }

  const ChannelGeometry in_geo = input_geometry(raw);
  const ChannelGeometry out_geo = output_geometry(raw, f.receive);
  const int n_in = in_geo.count();
  const int n_out = out_geo.count();
  const cfloat* signal_base = f.receive.rep == OutputRep::Fourier
                                  ? f.receive.transformed->data()
                                  : raw.signals.data();
  const int n_t = raw.n_t;
  const double fs = raw.fs, t0 = raw.t0, fc = raw.fc, c0 = f.c0;
  const double cos_tmax = std::cos(raw.probe.directivity_limit);

  const VoxelGrid& grid = f.grid;
  const int R = f.offsets.radius;
  const int nxe = grid.nx + 2 * R, nye = grid.ny + 2 * R;
  const double sin_tmax = std::sin(raw.probe.directivity_limit);
  const int W = static_cast<int>(std::ceil(2.0 * settings.dmax_mm * sin_tmax / c0 * fs)) + 4;
  const int n_off = f.offsets.count();
  const int n_vox = grid.transverse_count();

  f.blocks.resize(grid.z.size());
  std::atomic<std::size_t> uncovered{0};

  for (int zi = 0; zi < f.n_depths(); ++zi) {
    const double z = grid.z[zi];
    SideTables tin = build_tables(in_geo, z, grid.x0, grid.y0, grid.pitch,
                                  grid.nx, grid.ny, c0, fc, cos_tmax, law_in ? law_in : &f.law_in,
                                  zi, settings.threads);
    SideTables tout = build_tables(out_geo, z, grid.x0 - R * grid.pitch,
                                   grid.y0 - R * grid.pitch, grid.pitch, nxe, nye,
                                   c0, fc, cos_tmax, law_out ? law_out : &f.law_out,
                                   zi, settings.threads);

    auto& block = f.blocks[zi];
    block.assign(static_cast<std::size_t>(n_vox) * n_off, kZero);

    parallel_for_chunked(n_vox, settings.threads, [&](std::size_t vlo, std::size_t vhi) {
      std::vector<double> yr(static_cast<std::size_t>(n_out) * W);
      std::vector<double> yi(static_cast<std::size_t>(n_out) * W);
      std::vector<int> m0(n_out);
      std::size_t local_uncovered = 0;

      for (std::size_t vox = vlo; vox < vhi; ++vox) {
        const int ix = static_cast<int>(vox) % grid.nx;
        const int iy = static_cast<int>(vox) / grid.nx;
        const std::size_t ext_center = static_cast<std::size_t>(iy + R) * nxe + (ix + R);

        for (int u = 0; u < n_out; ++u)
          m0[u] = static_cast<int>(std::floor(tout.delay[ext_center * n_out + u] * fs)) - W / 2;
        std::fill(yr.begin(), yr.end(), 0.0);
        std::fill(yi.begin(), yi.end(), 0.0);

        // Stage 1: transmit-focused partial traces per receive channel.
        for (int i = 0; i < n_in; ++i) {
          cfloat wi = tin.weight[vox * n_in + i];
          if (wi == kZero) continue;
          double q = (tin.delay[vox * n_in + i] - t0) * fs;
          double nqf = std::floor(q);
          int nq = static_cast<int>(nqf);
          double fq = q - nqf;
          double c1r = wi.real() * (1.0 - fq), c1i = wi.imag() * (1.0 - fq);
          double c2r = wi.real() * fq, c2i = wi.imag() * fq;
          const cfloat* traces = signal_base + (static_cast<std::size_t>(i) * n_out) * n_t;
          for (int u = 0; u < n_out; ++u) {
            int base = nq + m0[u];
            int mlo = std::max(0, -base);
            int mhi = std::min(W, n_t - 1 - base);
            if (mlo >= mhi) continue;
            const float* tr = reinterpret_cast<const float*>(traces + static_cast<std::size_t>(u) * n_t + base);
            double* ry = yr.data() + static_cast<std::size_t>(u) * W;
            double* iy_ = yi.data() + static_cast<std::size_t>(u) * W;
            for (int m = mlo; m < mhi; ++m) {
              double t0r = tr[2 * m], t0i = tr[2 * m + 1];
              double t1r = tr[2 * m + 2], t1i = tr[2 * m + 3];
              ry[m] += c1r * t0r - c1i * t0i + c2r * t1r - c2i * t1i;
              iy_[m] += c1r * t0i + c1i * t0r + c2r * t1i + c2i * t1r;
            }
          }
        }

        // Stage 2: receive focusing at every stored offset.
        cfloat* row = block.data() + vox * n_off;
        for (int oi = 0; oi < n_off; ++oi) {
          const auto [ox, oy] = f.offsets.steps[oi];
          const std::size_t p = static_cast<std::size_t>(iy + R + oy) * nxe + (ix + R + ox);
          if (!tout.covered[p]) {
            ++local_uncovered;
            continue;  // coefficient stays zero
          }
          double accr = 0.0, acci = 0.0;
          const double* bd = tout.delay.data() + p * n_out;
          const cfloat* bw = tout.weight.data() + p * n_out;
          for (int u = 0; u < n_out; ++u) {
            if (bw[u] == kZero) continue;
            double r = bd[u] * fs;
            double mrf = std::floor(r);
            int k = static_cast<int>(mrf) - m0[u];
            if (k < 0 || k + 1 >= W) continue;
            double fr = r - mrf;
            const double* ry = yr.data() + static_cast<std::size_t>(u) * W;
            const double* iy_ = yi.data() + static_cast<std::size_t>(u) * W;
            double vrr = (1.0 - fr) * ry[k] + fr * ry[k + 1];
            double vii = (1.0 - fr) * iy_[k] + fr * iy_[k + 1];
            accr += bw[u].real() * vrr - bw[u].imag() * vii;
            acci += bw[u].real() * vii + bw[u].imag() * vrr;
          }
          row[oi] = cfloat{static_cast<float>(accr), static_cast<float>(acci)};
        }
      }
      uncovered += local_uncovered;
    });
  }

  diag.uncovered_points = uncovered;
  if (diagnostics) *diagnostics = diag;
  f.validate();
  return f;
}

ConfocalVolume confocal_direct(std::shared_ptr<const ReflectionMatrixRaw> raw_ptr,
                               const BeamformSettings& settings) {
  const ReflectionMatrixRaw& raw = *raw_ptr;
  raw.validate();
  ReceiveRep rep = prepare_receive_rep(raw, settings);
  const ChannelGeometry in_geo = input_geometry(raw);
  const ChannelGeometry out_geo = output_geometry(raw, rep);
  const cfloat* signal_base = rep.rep == OutputRep::Fourier ? rep.transformed->data()
                                                            : raw.signals.data();
  const int n_in = in_geo.count(), n_out = out_geo.count(), n_t = raw.n_t;
  const double fs = raw.fs, t0 = raw.t0, fc = raw.fc, c0 = raw.probe.c0;
  const double cos_tmax = std::cos(raw.probe.directivity_limit);
  const VoxelGrid& grid = settings.grid;

  ConfocalVolume v;
  v.grid = grid;
  v.intensity.resize(grid.z.size());
  for (std::size_t zi = 0; zi < grid.z.size(); ++zi) {
    const double z = grid.z[zi];
    v.intensity[zi].assign(grid.transverse_count(), 0.f);
    parallel_for(grid.transverse_count(), settings.threads, [&](std::size_t vox) {
      double x = grid.x(static_cast<int>(vox) % grid.nx);
      double y = grid.y(static_cast<int>(vox) / grid.nx);
      cdouble acc{0, 0};
      for (int u = 0; u < n_out; ++u) {
        if (!channel_apod(out_geo, u, x, y, z, cos_tmax)) continue;
        double b = channel_delay(out_geo, u, x, y, z, c0);
        double r = b * fs;
        double mrf = std::floor(r);
        double fr = r - mrf;
        int mr = static_cast<int>(mrf);
        cdouble y0{0, 0}, y1{0, 0};
        for (int i = 0; i < n_in; ++i) {
          if (!channel_apod(in_geo, i, x, y, z, cos_tmax)) continue;
          double a = channel_delay(in_geo, i, x, y, z, c0);
          double q = (a - t0) * fs;
          double nqf = std::floor(q);
          double fq = q - nqf;
          int base = static_cast<int>(nqf) + mr;
          if (base < 0 || base + 2 >= n_t) continue;
          const cfloat* tr = signal_base + (static_cast<std::size_t>(i) * n_out + u) * n_t;
          cdouble wi = std::polar(1.0, two_pi * fc * a);
          cdouble s0 = (1.0 - fq) * cdouble(tr[base]) + fq * cdouble(tr[base + 1]);
          cdouble s1 = (1.0 - fq) * cdouble(tr[base + 1]) + fq * cdouble(tr[base + 2]);
          y0 += wi * s0;
          y1 += wi * s1;
        }
        acc += std::polar(1.0, two_pi * fc * b) * ((1.0 - fr) * y0 + fr * y1);
      }
      v.intensity[zi][vox] = static_cast<float>(std::norm(acc));
    });
  }
  return v;
}

FocusedRMatrix emulate_linear_array(std::shared_ptr<const ReflectionMatrixRaw> raw_ptr,
                                    const LinearEmulationSettings& settings,
                                    const LawField* law_in, const LawField* law_out) {
  const ReflectionMatrixRaw& raw = *raw_ptr;
  raw.validate();
  if (raw.basis_in.kind != IlluminationBasis::Kind::PlaneWave)
    throw ContractError("linear-array emulation needs plane-wave data");
  if (settings.z.empty() || settings.ny <= 0)
    throw ContractError("linear-array emulation needs a (y, z) grid");
  if (std::abs(settings.x_f) > 0.5 * raw.probe.aperture.x)
    std::fprintf(stderr, "umi: warning: focus line x=%g mm outside the aperture\n",
                 settings.x_f);

  FocusedRMatrix f;
  f.grid.x0 = settings.x_f;
  f.grid.y0 = settings.y0;
  f.grid.pitch = settings.y_pitch;
  f.grid.nx = 1;
  f.grid.ny = settings.ny;
  f.grid.z = settings.z;
  f.grid.validate();
  // Offsets along y only.
  f.offsets.pitch = settings.y_pitch;
  f.offsets.dmax = settings.dmax_mm;
  f.offsets.radius = static_cast<int>(std::floor(settings.dmax_mm / settings.y_pitch + 1e-9));
  int side = 2 * f.offsets.radius + 1;
  f.offsets.reverse.assign(static_cast<std::size_t>(side) * side, -1);
  for (int dy = -f.offsets.radius; dy <= f.offsets.radius; ++dy) {
    f.offsets.reverse[(dy + f.offsets.radius) * side + f.offsets.radius] =
        static_cast<int>(f.offsets.steps.size());
    f.offsets.steps.emplace_back(0, static_cast<std::int16_t>(dy));
  }
  f.offsets.zero_index = f.offsets.index_of(0, 0);
  f.probe = raw.probe;
  f.fc = raw.fc;
  f.c0 = raw.probe.c0;
  f.raw = raw_ptr;
  f.linear = std::make_shared<LinearEmulation>(LinearEmulation{settings.x_f, settings.z_f});
  if (law_in) f.law_in = *law_in;
  if (law_out) f.law_out = *law_out;

  const double c0 = f.c0, fs = raw.fs, t0 = raw.t0, fc = raw.fc;
  const double zf = settings.z_f, xf = settings.x_f;
  const double cos_tmax = std::cos(raw.probe.directivity_limit);
  const int n_in = raw.n_in, n_out = raw.n_out, n_t = raw.n_t;
  const int n_off = f.offsets.count();

  auto cyl_pw = [&](double theta, double s, double z) {
    return (s * std::sin(theta) + z * std::cos(theta)) / c0;
  };
  auto cyl_el = [&](double u, double s, double z) {
    double d = s - u;
    return std::sqrt(d * d + z * z) / c0;
  };

  f.blocks.resize(f.grid.z.size());
  for (std::size_t zi = 0; zi < f.grid.z.size(); ++zi) {
    const double z = f.grid.z[zi];
    auto& block = f.blocks[zi];
    block.assign(static_cast<std::size_t>(f.grid.ny) * n_off, kZero);

    // Input part per (channel, y_in); collimation terms folded in.
    std::vector<double> a(static_cast<std::size_t>(f.grid.ny) * n_in);
    std::vector<cdouble> wa(a.size());
    for (int jy = 0; jy < f.grid.ny; ++jy) {
      double y = f.grid.y(jy);
      for (int i = 0; i < n_in; ++i) {
        const Vec2& th = raw.basis_in.angles[i];
        double d = cyl_pw(th.y, y, z) + cyl_pw(th.x, xf, zf) - 2.0 * zf / c0;
        a[static_cast<std::size_t>(jy) * n_in + i] = d;
        cdouble w = std::polar(1.0, two_pi * fc * d);
        if (law_in && !law_in->flat())
          w *= std::conj(law_in->value(static_cast<int>(zi), xf, y, i));
        wa[static_cast<std::size_t>(jy) * n_in + i] = w;
      }
    }
    // Output part per (element, y_out) on the extended y lattice.
    const int Ry = f.offsets.radius;
    const int nye = f.grid.ny + 2 * Ry;
    std::vector<double> b(static_cast<std::size_t>(nye) * n_out);
    std::vector<cdouble> wb(b.size());
    for (int jy = 0; jy < nye; ++jy) {
      double y = f.grid.y0 + (jy - Ry) * f.grid.pitch;
      for (int u = 0; u < n_out; ++u) {
        const Vec2& e = raw.probe.element_positions[u];
        double d = cyl_el(e.y, y, z) + cyl_el(e.x, xf, zf);
        b[static_cast<std::size_t>(jy) * n_out + u] = d;
        cdouble w{0, 0};
        double dy = y - e.y;
        double dist = std::sqrt(dy * dy + z * z);
        if (raw.probe.element_active[u] && z / dist >= cos_tmax) {
          w = std::polar(1.0, two_pi * fc * d);
          if (law_out && !law_out->flat())
            w *= std::conj(law_out->value(static_cast<int>(zi), xf, y, u));
        }
        wb[static_cast<std::size_t>(jy) * n_out + u] = w;
      }
    }

    parallel_for(f.grid.ny, settings.threads, [&](std::size_t jy) {
      cfloat* row = block.data() + jy * n_off;
      for (int oi = 0; oi < n_off; ++oi) {
        int jout = static_cast<int>(jy) + f.offsets.steps[oi].second + Ry;
        cdouble acc{0, 0};
        for (int i = 0; i < n_in; ++i) {
          cdouble wi = wa[jy * n_in + i];
          double q = (a[jy * n_in + i] - t0) * fs;
          double nqf = std::floor(q);
          double fq = q - nqf;
          int nq = static_cast<int>(nqf);
          for (int u = 0; u < n_out; ++u) {
            cdouble wu = wb[static_cast<std::size_t>(jout) * n_out + u];
            if (wu == cdouble{0, 0}) continue;
            double r = b[static_cast<std::size_t>(jout) * n_out + u] * fs;
            double mrf = std::floor(r);
            double fr = r - mrf;
            int base = nq + static_cast<int>(mrf);
            if (base < 0 || base + 2 >= n_t) continue;
            const cfloat* tr = raw.trace(i, u);
            cdouble s0 = (1.0 - fq) * cdouble(tr[base]) + fq * cdouble(tr[base + 1]);
            cdouble s1 = (1.0 - fq) * cdouble(tr[base + 1]) + fq * cdouble(tr[base + 2]);
            acc += wi * wu * ((1.0 - fr) * s0 + fr * s1);
          }
        }
        row[oi] = cfloat{static_cast<float>(acc.real()), static_cast<float>(acc.imag())};
      }
    });
  }
  f.validate();
  return f;
}

ChannelGroups group_plane_wave_theta_y(const ReflectionMatrixRaw& raw) {
  if (raw.basis_in.kind != IlluminationBasis::Kind::PlaneWave)
    throw ContractError("theta_y grouping needs plane-wave data");
  ChannelGroups g;
  std::map<long long, int> seen;
  for (int i = 0; i < raw.n_in; ++i) {
    long long key = llround(raw.basis_in.angles[i].y * 1e9);
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen[key] = static_cast<int>(g.values.size());
      g.values.push_back(raw.basis_in.angles[i].y);
      g.members.push_back({i});
    } else {
      g.members[it->second].push_back(i);
    }
  }
  return g;
}

ChannelGroups group_elements_u_y(const ProbeModel& probe) {
  ChannelGroups g;
  std::map<long long, int> seen;
  for (int u = 0; u < probe.element_count(); ++u) {
    if (!probe.element_active[u]) continue;
    long long key = llround(probe.element_positions[u].y * 1e9);
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen[key] = static_cast<int>(g.values.size());
      g.values.push_back(probe.element_positions[u].y);
      g.members.push_back({u});
    } else {
      g.members[it->second].push_back(u);
    }
  }
  return g;
}

}  // namespace umi
