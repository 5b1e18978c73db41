#include "umi/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "umi/parallel.hpp"

namespace umi {

PulseModel pulse_for(const ProbeModel& probe) {
  PulseModel p;
  p.fc = probe.center_frequency;
  double half_bw = 0.5 * probe.bandwidth();
  // exp(-(2 pi f sigma)^2 / 2) = 1/2 at f = half_bw
  p.sigma_t = std::sqrt(2.0 * std::log(2.0)) / (two_pi * half_bw);
  return p;
}

void ReflectionMatrixRaw::validate() const {
  probe.validate();
  basis_in.validate(probe);
  if (n_in != basis_in.input_count(probe)) throw ContractError("raw n_in mismatch");
  if (n_out != probe.element_count()) throw ContractError("raw n_out mismatch");
  if (n_t < 0) throw ContractError("raw n_t negative");
  if (signals.size() != static_cast<std::size_t>(n_in) * n_out * n_t)
    throw ContractError("raw signal buffer size mismatch");
  if (fs < probe.bandwidth())
    throw ContractError("sampling frequency below the signal bandwidth");
}

double ReflectionMatrixRaw::mean_power() const {
  if (signals.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : signals) acc += std::norm(s);
  return acc / static_cast<double>(signals.size());
}

namespace {

// Tabulated pulse envelope, quantized to 1/64 sample. Pure function of the
// total delay, so leg order never matters.
struct EnvelopeLut {
  double inv_step;
  double support;
  std::vector<float> values;

  EnvelopeLut(const PulseModel& pulse, double fs) {
    inv_step = fs * 64.0;
    support = pulse.support();
    int n = static_cast<int>(std::ceil(support * inv_step)) + 2;
    values.resize(n);
    for (int k = 0; k < n; ++k)
      values[k] = static_cast<float>(pulse.envelope(k / inv_step));
  }
  float operator()(double t) const {
    int k = static_cast<int>(std::lround(std::abs(t) * inv_step));
    return k < static_cast<int>(values.size()) ? values[k] : 0.f;
  }
};

struct Leg {
  double delay;   // us
  cdouble coeff;  // amplitude * screen transmittance * exp(-i w delay)
};

// Geometric leg between element e and scatterer position r: spherical
// spreading, cosine obliquity, hard directivity cutoff, screen crossing.
Leg element_leg(const Vec2& e, bool active, const Vec3& r, double c0,
                double theta_max, double fc, const PhaseScreen* screen) {
  Leg leg{0.0, {0.0, 0.0}};
  double dx = r.x - e.x, dy = r.y - e.y, dz = r.z;
  double d = std::sqrt(dx * dx + dy * dy + dz * dz);
  leg.delay = d / c0;
  if (!active) return leg;
  double cos_theta = dz / d;
  if (cos_theta < std::cos(theta_max)) return leg;
  cdouble t{1.0, 0.0};
  if (screen && screen->z > 0 && screen->z < r.z) {
    double f = screen->z / r.z;
    t = screen->transmittance(e.x + f * dx, e.y + f * dy);
  }
  double amp = cos_theta / (4.0 * pi * d);
  leg.coeff = amp * t * std::polar(1.0, -two_pi * fc * leg.delay);
  return leg;
}

}  // namespace

double plane_wave_firing_delay(const Vec2& angle, const Vec2& element, double c0) {
  return (element.x * std::sin(angle.x) + element.y * std::sin(angle.y)) / c0;
}

ReflectionMatrixRaw simulate(const MediumDescription& medium,
                             const PhaseScreen* screen,
                             const ProbeModel& probe,
                             const IlluminationBasis& basis_in,
                             const SimulateOptions& options,
                             std::uint64_t seed) {
  probe.validate();
  basis_in.validate(probe);
  if (medium.empty()) throw ContractError("medium has no scatterers");

  Rng rng(seed, "simulate");
  std::vector<PointScatterer> scatterers = realize_speckle(medium, probe, rng);
  scatterers.insert(scatterers.begin(), medium.scatterers.begin(),
                    medium.scatterers.end());
  for (const auto& s : scatterers)
    if (!(s.position.z > 0))
      throw ContractError("scatterer behind the probe plane");

  const double c0 = medium.c0;
  const PulseModel pulse = pulse_for(probe);
  const bool pw = basis_in.kind == IlluminationBasis::Kind::PlaneWave;
  const int n_elem = probe.element_count();
  const int n_in = basis_in.input_count(probe);
  const std::size_t n_sc = scatterers.size();

  // Receive/transmit legs per (scatterer, element).
  std::vector<Leg> legs(n_sc * n_elem);
  parallel_for(n_sc, options.threads, [&](std::size_t s) {
    for (int e = 0; e < n_elem; ++e)
      legs[s * n_elem + e] =
          element_leg(probe.element_positions[e], probe.element_active[e] != 0,
                      scatterers[s].position, c0, probe.directivity_limit,
                      probe.center_frequency, screen);
  });

  // Firing offsets for plane waves (can be negative).
  std::vector<double> firing;  // (i, e)
  if (pw) {
    firing.resize(static_cast<std::size_t>(n_in) * n_elem);
    for (int i = 0; i < n_in; ++i)
      for (int e = 0; e < n_elem; ++e)
        firing[static_cast<std::size_t>(i) * n_elem + e] =
            plane_wave_firing_delay(basis_in.angles[i], probe.element_positions[e], c0);
  }

  // Echo time window.
  double t_lo = 1e300, t_hi = -1e300;
  double fire_lo = 0.0, fire_hi = 0.0;
  if (pw) {
    for (double f : firing) {
      fire_lo = std::min(fire_lo, -f);
      fire_hi = std::max(fire_hi, -f);
    }
  }
  for (std::size_t s = 0; s < n_sc; ++s) {
    double dmin = 1e300, dmax = -1e300;
    for (int e = 0; e < n_elem; ++e) {
      double d = legs[s * n_elem + e].delay;
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
    t_lo = std::min(t_lo, 2 * dmin + fire_lo);
    t_hi = std::max(t_hi, 2 * dmax + fire_hi);
  }
  double pad = options.time_pad + pulse.support();
  double t0 = options.t_start.value_or(std::max(0.0, t_lo - pad));
  // Keep the time origin on the sample grid; the focused-matrix symmetry
  // of reciprocal data is exact only when t0 * fs is an integer.
  t0 = std::floor(t0 * options.fs) / options.fs;
  double t1 = options.t_stop.value_or(t_hi + pad);
  if (t1 < t0) throw ContractError("simulate: empty time window");

  ReflectionMatrixRaw raw;
  raw.probe = probe;
  raw.basis_in = basis_in;
  raw.n_in = n_in;
  raw.n_out = n_elem;
  raw.fs = options.fs;
  raw.fc = probe.center_frequency;
  raw.t0 = t0;
  raw.n_t = static_cast<int>(std::ceil((t1 - t0) * options.fs)) + 1;
  raw.signals.assign(static_cast<std::size_t>(n_in) * n_elem * raw.n_t, cfloat{0, 0});

  const EnvelopeLut env(pulse, options.fs);
  const double fs = options.fs;
  const int n_t = raw.n_t;

  auto add_burst = [&](cfloat* tr, cdouble coeff, double tau) {
    int lo = std::max(0, static_cast<int>(std::ceil((tau - env.support - t0) * fs)));
    int hi = std::min(n_t - 1, static_cast<int>(std::floor((tau + env.support - t0) * fs)));
    cfloat c{static_cast<float>(coeff.real()), static_cast<float>(coeff.imag())};
    for (int n = lo; n <= hi; ++n)
      tr[n] += c * env(t0 + n / fs - tau);
  };

  if (!pw) {
    // One worker per transmit element; scatterer order is fixed, so the
    // result is identical for any thread count.
    parallel_for(n_in, options.threads, [&](std::size_t i) {
      for (std::size_t s = 0; s < n_sc; ++s) {
        const Leg& in = legs[s * n_elem + i];
        if (in.coeff == cdouble{0.0, 0.0}) continue;
        cdouble ci = scatterers[s].reflectivity * in.coeff;
        for (int u = 0; u < n_elem; ++u) {
          const Leg& out = legs[s * n_elem + u];
          if (out.coeff == cdouble{0.0, 0.0}) continue;
          add_burst(raw.trace(static_cast<int>(i), u), ci * out.coeff,
                    in.delay + out.delay);
        }
      }
    });
  } else {
    // Composite transmit waveform per (scatterer, angle) on the global
    // time grid, then one interpolated shift per receive element.
    parallel_for(n_in, options.threads, [&](std::size_t i) {
      std::vector<cdouble> wave;
      for (std::size_t s = 0; s < n_sc; ++s) {
        double w_lo = 1e300, w_hi = -1e300;
        for (int e = 0; e < n_elem; ++e) {
          const Leg& leg = legs[s * n_elem + e];
          if (leg.coeff == cdouble{0.0, 0.0}) continue;
          double tau = leg.delay + firing[i * n_elem + e];
          w_lo = std::min(w_lo, tau - env.support);
          w_hi = std::max(w_hi, tau + env.support);
        }
        if (w_hi < w_lo) continue;
        int m0 = static_cast<int>(std::floor((w_lo - t0) * fs)) - 1;
        int m1 = static_cast<int>(std::ceil((w_hi - t0) * fs)) + 1;
        wave.assign(m1 - m0 + 1, cdouble{0, 0});
        for (int e = 0; e < n_elem; ++e) {
          const Leg& leg = legs[s * n_elem + e];
          if (leg.coeff == cdouble{0.0, 0.0}) continue;
          double fire = firing[i * n_elem + e];
          double tau = leg.delay + fire;
          cdouble c = leg.coeff * std::polar(1.0, -two_pi * raw.fc * fire);
          int lo = std::max(m0, static_cast<int>(std::ceil((tau - env.support - t0) * fs)));
          int hi = std::min(m1, static_cast<int>(std::floor((tau + env.support - t0) * fs)));
          for (int n = lo; n <= hi; ++n)
            wave[n - m0] += c * static_cast<double>(env(t0 + n / fs - tau));
        }
        cdouble gamma = scatterers[s].reflectivity;
        for (int u = 0; u < n_elem; ++u) {
          const Leg& out = legs[s * n_elem + u];
          if (out.coeff == cdouble{0.0, 0.0}) continue;
          cfloat* tr = raw.trace(static_cast<int>(i), u);
          cdouble cu = gamma * out.coeff;
          double shift = out.delay * fs;  // samples
          int ishift = static_cast<int>(std::floor(shift));
          double frac = shift - ishift;
          // trace[n] += cu * wave[n - shift] (linear interpolation)
          int lo = std::max(0, m0 + ishift);
          int hi = std::min(n_t - 1, m0 + ishift + static_cast<int>(wave.size()));
          for (int n = lo; n <= hi; ++n) {
            int k = n - ishift - m0;
            cdouble w0 = (k >= 0 && k < static_cast<int>(wave.size())) ? wave[k] : cdouble{0, 0};
            cdouble wm = (k - 1 >= 0 && k - 1 < static_cast<int>(wave.size())) ? wave[k - 1] : cdouble{0, 0};
            cdouble v = cu * ((1.0 - frac) * w0 + frac * wm);
            tr[n] += cfloat{static_cast<float>(v.real()), static_cast<float>(v.imag())};
          }
        }
      }
    });
  }

  if (options.noise_power > 0 && !raw.signals.empty()) {
    double sigma = std::sqrt(options.noise_power * raw.mean_power());
    Rng noise = rng.substream("noise");
    parallel_for(n_in, options.threads, [&](std::size_t i) {
      std::size_t base = i * static_cast<std::size_t>(n_elem) * n_t;
      for (std::size_t k = 0; k < static_cast<std::size_t>(n_elem) * n_t; ++k) {
        cdouble n = sigma * noise.cgauss(base + k);
        raw.signals[base + k] +=
            cfloat{static_cast<float>(n.real()), static_cast<float>(n.imag())};
      }
    });
  }

  raw.validate();
  return raw;
}

ReflectionMatrixRaw synthesize_plane_waves(const ReflectionMatrixRaw& td,
                                           const IlluminationBasis& pw_basis,
                                           int threads) {
  if (td.basis_in.kind != IlluminationBasis::Kind::Transducer)
    throw ContractError("plane-wave synthesis needs a transducer-basis matrix");
  if (pw_basis.kind != IlluminationBasis::Kind::PlaneWave)
    throw ContractError("target basis must be plane-wave");

  ReflectionMatrixRaw out;
  out.probe = td.probe;
  out.basis_in = pw_basis;
  out.n_in = static_cast<int>(pw_basis.angles.size());
  out.n_out = td.n_out;
  out.n_t = td.n_t;
  out.fs = td.fs;
  out.fc = td.fc;
  out.t0 = td.t0;
  out.signals.assign(static_cast<std::size_t>(out.n_in) * out.n_out * out.n_t,
                     cfloat{0, 0});

  const double c0 = td.probe.c0;
  parallel_for(out.n_in, threads, [&](std::size_t a) {
    const Vec2 angle = pw_basis.angles[a];
    for (int e = 0; e < td.n_in; ++e) {
      if (!td.probe.element_active[e]) continue;
      double fire = plane_wave_firing_delay(angle, td.probe.element_positions[e], c0);
      // Element e fires at +fire: shift its echoes later by fire and
      // rotate the baseband carrier accordingly.
      double shift = fire * td.fs;
      int ishift = static_cast<int>(std::floor(shift));
      double frac = shift - ishift;
      cdouble rot = std::polar(1.0, -two_pi * td.fc * fire);
      for (int u = 0; u < td.n_out; ++u) {
        const cfloat* src = td.trace(e, u);
        cfloat* dst = out.trace(static_cast<int>(a), u);
        for (int n = 0; n < td.n_t; ++n) {
          int k = n - ishift;
          cdouble s0 = (k >= 0 && k < td.n_t) ? cdouble(src[k]) : cdouble{0, 0};
          cdouble sm = (k - 1 >= 0 && k - 1 < td.n_t) ? cdouble(src[k - 1]) : cdouble{0, 0};
          cdouble v = rot * ((1.0 - frac) * s0 + frac * sm);
          dst[n] += cfloat{static_cast<float>(v.real()), static_cast<float>(v.imag())};
        }
      }
    }
  });
  return out;
}

}  // namespace umi
