#include "umi/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace umi {

namespace fs = std::filesystem;

bool RunReport::all_passed() const {
  if (!failed_stage.empty()) return false;
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

std::string RunReport::to_text() const {
  std::ostringstream out;
  out << "umi run report\n";
  out << "==============\n\n";
  out << "stages:\n";
  for (const auto& t : timings) {
    out << "  " << std::left << std::setw(18) << t.name << std::right
        << std::fixed << std::setprecision(3) << std::setw(9) << t.seconds
        << " s";
    if (t.bytes) out << "  " << t.bytes << " bytes";
    if (t.cost_units > 0)
      out << "  cost " << std::scientific << std::setprecision(3)
          << t.cost_units << std::fixed;
    out << "\n";
  }
  if (!failed_stage.empty()) out << "\nFAILED at stage: " << failed_stage << "\n";
  out << "\nartifacts:\n";
  for (const auto& a : artifacts) out << "  " << a << "\n";
  if (!checks.empty()) {
    out << "\nchecks:\n";
    for (const auto& c : checks)
      out << "  [" << (c.passed ? "PASS" : "FAIL") << "] " << c.name
          << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
  }
  return out.str();
}

ProbeModel probe_from_config(const Config& cfg) {
  int nx = static_cast<int>(cfg.get_int("probe.nx", 16));
  int ny = static_cast<int>(cfg.get_int("probe.ny", 16));
  double pitch = cfg.get_double("probe.pitch_mm", 0.5);
  double fc = cfg.get_double("probe.fc_mhz", 3.0);
  double bw_lo = cfg.get_double("probe.bw_lo_mhz", 1.8);
  double bw_hi = cfg.get_double("probe.bw_hi_mhz", 4.2);
  double c0 = cfg.get_double("probe.c0_m_s", 1540.0) * 1e-3;  // -> mm/us
  double theta = deg_to_rad(cfg.get_double("probe.theta_max_deg", 28.0));
  std::vector<int> dead;
  if (cfg.has("probe.dead"))
    for (const auto& tok : Config::split_list(cfg.get_string("probe.dead")))
      dead.push_back(std::stoi(tok));
  int period = static_cast<int>(cfg.get_int("probe.inactive_row_period", 0));
  int count = static_cast<int>(cfg.get_int("probe.inactive_row_count", 0));
  return make_grid_probe(nx, ny, pitch, fc, bw_lo, bw_hi, c0, theta, dead, period,
                         count);
}

MediumDescription medium_from_config(const Config& cfg) {
  MediumDescription m;
  m.c0 = cfg.get_double("medium.c0_m_s", 1540.0) * 1e-3;
  for (const auto& line : cfg.get_all("medium.scatterer")) {
    auto tok = Config::split_list(line);
    if (tok.size() != 4 && tok.size() != 5)
      throw ContractError("medium.scatterer needs x,y,z,re[,im]: " + line);
    PointScatterer s;
    s.position = {std::stod(tok[0]), std::stod(tok[1]), std::stod(tok[2])};
    s.reflectivity = cdouble(std::stod(tok[3]),
                             tok.size() == 5 ? std::stod(tok[4]) : 0.0);
    m.scatterers.push_back(s);
  }
  for (const auto& line : cfg.get_all("medium.speckle")) {
    auto tok = Config::split_list(line);
    if (tok.size() != 8)
      throw ContractError("medium.speckle needs x0,x1,y0,y1,z0,z1,density,amp: " + line);
    SpeckleRegion r;
    r.lo = {std::stod(tok[0]), std::stod(tok[2]), std::stod(tok[4])};
    r.hi = {std::stod(tok[1]), std::stod(tok[3]), std::stod(tok[5])};
    r.density_per_cell = std::stod(tok[6]);
    r.rms_amplitude = std::stod(tok[7]);
    m.speckle_regions.push_back(r);
  }
  return m;
}

std::optional<PhaseScreen> screen_from_config(const Config& cfg,
                                              std::uint64_t seed) {
  if (!cfg.get_bool("screen.enable", cfg.has("screen.rms_rad"))) return {};
  double z = cfg.get_double("screen.z_mm", 0.5);
  double extent = cfg.get_double("screen.extent_mm", 12.0);
  double pitch = cfg.get_double("screen.pitch_mm", 0.25);
  double corr = cfg.get_double("screen.corr_mm", 1.5);
  Rng rng(seed, "screen");
  std::string kind = cfg.get_string("screen.kind", "smooth");
  if (kind == "split") {
    return make_split_screen(z, extent, pitch,
                             cfg.get_double("screen.rms_left", 1.0),
                             cfg.get_double("screen.rms_right", 1.0), corr, rng);
  }
  if (kind != "smooth") throw ContractError("unknown screen.kind: " + kind);
  return make_random_screen(z, extent, pitch, cfg.get_double("screen.rms_rad"),
                            corr, rng);
}

IlluminationBasis basis_from_config(const Config& cfg, const ProbeModel& probe) {
  std::string kind = cfg.get_string("acquire.basis", "transducer");
  if (kind == "transducer") return IlluminationBasis{};
  if (kind != "planewave") throw ContractError("unknown acquire.basis: " + kind);
  IlluminationBasis b;
  if (cfg.has("acquire.pw_pitch_deg"))
    b = plane_wave_grid_with_pitch(probe,
                                   deg_to_rad(cfg.get_double("acquire.pw_pitch_deg")));
  else
    b = plane_wave_grid(probe);
  int ds = static_cast<int>(cfg.get_int("acquire.pw_downsample", 1));
  if (ds > 1) b = downsample_angles(b, ds);
  return b;
}

SimulateOptions simulate_options_from_config(const Config& cfg, int threads) {
  SimulateOptions o;
  o.noise_power = cfg.get_double("acquire.noise_power", 0.0);
  o.fs = cfg.get_double("acquire.fs_mhz", 6.0);
  o.time_pad = cfg.get_double("acquire.time_pad_us", 0.5);
  if (cfg.has("acquire.t_start_us")) o.t_start = cfg.get_double("acquire.t_start_us");
  if (cfg.has("acquire.t_stop_us")) o.t_stop = cfg.get_double("acquire.t_stop_us");
  o.threads = threads;
  return o;
}

BeamformSettings beamform_settings_from_config(const Config& cfg, int threads) {
  BeamformSettings s;
  s.grid = VoxelGrid::parse(cfg.get_string("grid.spec"));
  s.dmax_mm = cfg.get_double("beamform.dmax_mm", 10.0);
  std::string rep = cfg.get_string("beamform.output_basis", "transducer");
  if (rep == "fourier")
    s.out_rep = OutputRep::Fourier;
  else if (rep != "transducer")
    throw ContractError("unknown beamform.output_basis: " + rep);
  s.fourier_downsample = static_cast<int>(cfg.get_int("beamform.fourier_downsample", 1));
  s.threads = threads;
  return s;
}

std::vector<SpatialWindow> windows_from_config(const std::string& spec,
                                               const VoxelGrid& grid,
                                               const ProbeModel& probe) {
  (void)probe;
  if (spec.rfind("grid:", 0) == 0) {
    // grid:NxM,w_rho,w_z
    std::istringstream in(spec.substr(5));
    int nx = 0, ny = 0;
    double wr = 0, wz = 0;
    char x = 0, c1 = 0, c2 = 0;
    if (!(in >> nx >> x >> ny >> c1 >> wr >> c2 >> wz) || x != 'x')
      throw ContractError("bad window layout spec: " + spec);
    return window_layout(grid, nx, ny, wr, wr, wz);
  }
  return parse_windows(spec);
}

std::string rpsf_metrics_table(const RpsfStack& stack) {
  std::ostringstream out;
  out << "x_mm\ty_mm\tz_mm\tdrho_3db_mm\tresolved\tcontrast\talpha_s\talpha_m\t"
         "alpha_n\tbeta\tcoherence\n";
  out << std::setprecision(8);
  for (const auto& m : stack.metrics) {
    out << m.window.center.x << "\t" << m.window.center.y << "\t"
        << m.window.center.z << "\t" << m.res.radius_mm << "\t"
        << (m.res.resolved ? 1 : 0) << "\t";
    if (m.scattering) {
      out << m.scattering->contrast << "\t" << m.scattering->alpha_s << "\t"
          << m.scattering->alpha_m << "\t" << m.scattering->alpha_n << "\t"
          << m.scattering->beta << "\t";
    } else {
      out << "nan\tnan\tnan\tnan\tnan\t";
    }
    out << m.coherence << "\n";
  }
  return out.str();
}

void write_rpsf_maps(const RpsfStack& stack, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  auto put = [&](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  put("UMP1", 4);
  std::uint32_t version = 1, n = static_cast<std::uint32_t>(stack.maps.size());
  put(&version, 4);
  put(&n, 4);
  for (const auto& m : stack.maps) {
    double hdr[8] = {m.window.center.x, m.window.center.y, m.window.center.z,
                     m.window.extent.x, m.window.extent.y, m.window.extent.z,
                     m.offsets.pitch,   m.drho0};
    put(hdr, sizeof(hdr));
    std::int32_t radius = m.offsets.radius;
    put(&radius, 4);
    // Dense (2R+1)^2 float32 intensity image of the offset lattice.
    int side = 2 * m.offsets.radius + 1;
    std::vector<float> img(static_cast<std::size_t>(side) * side, 0.f);
    for (int oi = 0; oi < m.offsets.count(); ++oi) {
      auto [dx, dy] = m.offsets.steps[oi];
      img[(dy + m.offsets.radius) * side + (dx + m.offsets.radius)] =
          static_cast<float>(m.mean_intensity[oi]);
    }
    put(img.data(), img.size() * sizeof(float));
  }
  if (!out) throw IoError("write failure: " + path);
}

namespace {

class StageClock {
 public:
  explicit StageClock(RunReport& report) : report_(report) {}
  template <typename F>
  auto stage(const std::string& name, F&& fn, std::size_t bytes = 0,
             double cost = 0.0) {
    auto start = std::chrono::steady_clock::now();
    auto result = fn();
    auto stop = std::chrono::steady_clock::now();
    report_.timings.push_back(
        {name, std::chrono::duration<double>(stop - start).count(), bytes, cost});
    return result;
  }
  void note_bytes(std::size_t bytes) {
    if (!report_.timings.empty()) report_.timings.back().bytes = bytes;
  }
  void note_cost(double cost) {
    if (!report_.timings.empty()) report_.timings.back().cost_units = cost;
  }

 private:
  RunReport& report_;
};

double beamform_cost_units(const ReflectionMatrixRaw& raw,
                           const BeamformSettings& s) {
  double n_vox = static_cast<double>(s.grid.transverse_count()) * s.grid.z.size();
  return n_vox * raw.n_in * raw.n_out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

RunReport run_pipeline(const Config& cfg, const std::string& out_dir,
                       std::optional<std::uint64_t> seed_override,
                       int threads_override) {
  RunReport report;
  fs::create_directories(out_dir);
  auto art = [&](const std::string& name) {
    report.artifacts.push_back(name);
    return (fs::path(out_dir) / name).string();
  };
  StageClock clock(report);

  const std::uint64_t seed =
      seed_override.value_or(static_cast<std::uint64_t>(cfg.get_int("seed", 1)));
  const int threads = threads_override >= 0
                          ? threads_override
                          : static_cast<int>(cfg.get_int("threads", 0));

  std::string current_stage = "setup";
  try {
    ProbeModel probe = probe_from_config(cfg);
    MediumDescription medium = medium_from_config(cfg);
    auto screen = screen_from_config(cfg, seed);
    IlluminationBasis basis = basis_from_config(cfg, probe);
    SimulateOptions sim_opts = simulate_options_from_config(cfg, threads);

    // simulate
    current_stage = "simulate";
    auto raw = std::make_shared<ReflectionMatrixRaw>(clock.stage("simulate", [&] {
      return simulate(medium, screen ? &*screen : nullptr, probe, basis, sim_opts,
                      seed);
    }));
    std::string raw_file = art("raw.umr");
    write_raw(*raw, raw_file);
    clock.note_bytes(fs::file_size(raw_file));

    // beamform
    current_stage = "beamform";
    BeamformSettings bf = beamform_settings_from_config(cfg, threads);
    BeamformDiagnostics diag;
    FocusedRMatrix focused = clock.stage(
        "beamform", [&] { return beamform(raw, bf, &diag); });
    clock.note_cost(beamform_cost_units(*raw, bf));
    // Stored relative to the run directory so runs are relocatable and
    // byte-identical across output directories.
    focused.raw_path = "raw.umr";
    std::string focused_file = art("focused.umf");
    write_focused(focused, focused_file);
    clock.note_bytes(fs::file_size(focused_file));

    // confocal + rpsf before
    current_stage = "analyze";
    bool paper_conv = cfg.get_bool("rpsf.paper_convention", false);
    std::vector<SpatialWindow> windows;
    if (cfg.has("rpsf.windows"))
      windows = windows_from_config(cfg.get_string("rpsf.windows"), bf.grid, probe);
    RpsfStack before = clock.stage("analyze", [&] {
      write_volume(confocal(focused), art("confocal_before.f32"));
      RpsfStack s = analyze_windows(focused, windows, paper_conv);
      write_text_file(art("metrics_before.tsv"), rpsf_metrics_table(s));
      write_rpsf_maps(s, art("rpsf_before.ump"));
      return s;
    });

    // correct
    std::optional<MultiscaleResult> corrected;
    if (cfg.get_bool("correct.enable", cfg.has("correct.schedule"))) {
      current_stage = "correct";
      MultiscaleOptions opts;
      std::string filter = cfg.get_string("correct.filter", "off");
      opts.use_filter = filter == "auto" || filter == "on";
      opts.filter_scale = cfg.get_double("correct.filter_scale", 3.0);
      opts.eps_stop = cfg.get_double("correct.eps_stop", 0.2);
      opts.sequential = cfg.get_bool("correct.sequential", true);
      opts.threads = threads;
      auto schedule = parse_schedule(cfg.get_string("correct.schedule"));
      corrected = clock.stage("correct", [&] {
        return multiscale_correct(focused, schedule, opts);
      });
      corrected->corrected.raw_path = "raw.umr";
      std::string corr_file = art("corrected.umf");
      write_focused(corrected->corrected, corr_file);
      write_laws(corrected->estimate, art("laws.umt"));
      clock.note_bytes(fs::file_size(corr_file));

      current_stage = "analyze-corrected";
      RpsfStack after = clock.stage("analyze-corrected", [&] {
        write_volume(confocal(corrected->corrected), art("confocal_after.f32"));
        RpsfStack s = analyze_windows(corrected->corrected, windows, paper_conv);
        write_text_file(art("metrics_after.tsv"), rpsf_metrics_table(s));
        write_rpsf_maps(s, art("rpsf_after.ump"));
        return s;
      });

      // Combined metrics table.
      std::ostringstream combined;
      combined << "z\tdrho_3db_before\tdrho_3db_after\tcontrast_gain_db\talpha_s\t"
                  "alpha_m\talpha_n\tbeta\teps\n";
      combined << std::setprecision(8);
      std::size_t n = std::min(before.metrics.size(), after.metrics.size());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& b = before.metrics[i];
        const auto& a = after.metrics[i];
        double gain = -1.0;
        if (b.scattering && a.scattering && b.scattering->contrast > 0 &&
            a.scattering->contrast > 0)
          gain = 10.0 * std::log10(a.scattering->contrast / b.scattering->contrast);
        // Nearest final-step window's reciprocity score.
        double eps = 2.0;
        if (!corrected->estimate.steps.empty()) {
          double best = 1e300;
          for (const auto& wl : corrected->estimate.steps.back().windows) {
            double d = norm(wl.window.center - a.window.center);
            if (d < best) {
              best = d;
              eps = wl.eps;
            }
          }
        }
        combined << a.window.center.z << "\t" << b.res.radius_mm << "\t"
                 << a.res.radius_mm << "\t" << gain << "\t";
        if (a.scattering)
          combined << a.scattering->alpha_s << "\t" << a.scattering->alpha_m
                   << "\t" << a.scattering->alpha_n << "\t" << a.scattering->beta
                   << "\t";
        else
          combined << "nan\tnan\tnan\tnan\t";
        combined << eps << "\n";
      }
      write_text_file(art("metrics.tsv"), combined.str());
    }

    // checks
    current_stage = "checks";
    for (const auto& name : Config::split_list(cfg.get_string("check.names", ""))) {
      CheckResult c;
      c.name = name;
      if (name == "determinism") {
        ReflectionMatrixRaw again =
            simulate(medium, screen ? &*screen : nullptr, probe, basis, sim_opts, seed);
        c.passed = again.signals == raw->signals && again.t0 == raw->t0;
        c.detail = "re-simulated bytes identical";
      } else if (name == "diffraction_limit") {
        double tol = cfg.get_double("check.diffraction_tolerance", 0.10);
        const RpsfStack& s = before;
        bool ok = !s.metrics.empty();
        std::ostringstream d;
        for (const auto& m : s.metrics) {
          double want = diffraction_limit(probe, m.window.center.z);
          bool this_ok =
              m.res.resolved && std::abs(m.res.radius_mm - want) <= tol * want;
          ok = ok && this_ok;
          d << m.res.radius_mm << "/" << want << " ";
        }
        c.passed = ok;
        c.detail = d.str();
      } else if (name == "recovery" && corrected && screen) {
        double thresh = cfg.get_double("check.recovery_threshold", 0.95);
        const auto& est = corrected->estimate;
        const CorrectionBasis& b = est.basis_in;
        double worst = 1.0;
        const auto& field = est.total_in;
        if (field.flat() || b.kind != CorrectionBasis::Kind::Transducer) {
          c.passed = false;
          c.detail = "no transducer-basis law available";
        } else {
          for (const auto& wl : est.steps.back().windows) {
            std::vector<cdouble> got(b.count()), truth(b.count());
            int zi = 0;
            double bestz = 1e300;
            for (std::size_t k = 0; k < field.tables.size(); ++k) {
              double d = std::abs(bf.grid.z[k] - wl.window.center.z);
              if (d < bestz) {
                bestz = d;
                zi = static_cast<int>(k);
              }
            }
            for (int o = 0; o < b.count(); ++o) {
              got[o] = field.value(zi, wl.window.center.x, wl.window.center.y, o);
              truth[o] = std::polar(
                  1.0, screen->phase_at(b.samples[o].x, b.samples[o].y));
            }
            worst = std::min(worst, circular_correlation(got, truth, b.active));
          }
          c.passed = worst >= thresh;
          c.detail = "worst window correlation " + std::to_string(worst);
        }
      } else if (name == "reciprocity" && corrected) {
        double thresh = cfg.get_double("check.reciprocity_threshold", 0.9);
        std::vector<double> scalars;
        for (const auto& wl : corrected->estimate.steps.back().windows)
          scalars.push_back(wl.scalar);
        double med = median(scalars);
        c.passed = med >= thresh;
        c.detail = "median scalar " + std::to_string(med);
      } else {
        c.passed = false;
        c.detail = "unknown or inapplicable check";
      }
      report.checks.push_back(c);
    }

    current_stage = "report";
    write_text_file(art("report.txt"), report.to_text());
    // A final manifest of everything produced.
    std::ostringstream manifest;
    for (const auto& a : report.artifacts) manifest << a << "\n";
    write_text_file((fs::path(out_dir) / "manifest.txt").string(), manifest.str());
  } catch (const std::exception& e) {
    report.failed_stage = current_stage;
    std::ostringstream manifest;
    manifest << "# run aborted during stage: " << current_stage << "\n";
    manifest << "# error: " << e.what() << "\n";
    for (const auto& a : report.artifacts) manifest << a << "\n";
    write_text_file((fs::path(out_dir) / "manifest.txt").string(), manifest.str());
    write_text_file((fs::path(out_dir) / "report.txt").string(), report.to_text());
    throw;
  }
  return report;
}

void export_maps(const std::string& run_dir, const std::string& what,
                 const std::string& out_dir, std::vector<std::string>* missing) {
  fs::create_directories(out_dir);
  auto want = [&](const std::string& key) { return what == "all" || what == key; };
  auto copy_if_present = [&](const std::string& name) {
    fs::path src = fs::path(run_dir) / name;
    if (fs::exists(src)) {
      fs::copy_file(src, fs::path(out_dir) / name, fs::copy_options::overwrite_existing);
      return true;
    }
    if (missing) missing->push_back(name);
    return false;
  };

  if (want("confocal")) {
    copy_if_present("confocal_before.f32");
    copy_if_present("confocal_before.f32.meta");
    copy_if_present("confocal_after.f32");
    copy_if_present("confocal_after.f32.meta");
  }
  if (want("rpsf")) {
    copy_if_present("rpsf_before.ump");
    copy_if_present("rpsf_after.ump");
  }
  if (want("metrics")) {
    copy_if_present("metrics_before.tsv");
    copy_if_present("metrics_after.tsv");
    copy_if_present("metrics.tsv");
  }
  if (want("phase_laws")) {
    fs::path laws_file = fs::path(run_dir) / "laws.umt";
    if (!fs::exists(laws_file)) {
      if (missing) missing->push_back("laws.umt");
    } else {
      TransmissionEstimate est = read_laws(laws_file.string());
      std::ostringstream out;
      out << "step\twindow\tx_mm\ty_mm\tz_mm\to_x\to_y\tphase_in_rad\t"
             "phase_out_rad\n";
      out << std::setprecision(8);
      for (std::size_t si = 0; si < est.steps.size(); ++si) {
        const auto& step = est.steps[si];
        for (std::size_t wi = 0; wi < step.windows.size(); ++wi) {
          const auto& wl = step.windows[wi];
          std::size_t n = std::max(wl.law_in.size(), wl.law_out.size());
          for (std::size_t o = 0; o < n; ++o) {
            const Vec2 pos = o < est.basis_out.samples.size()
                                 ? est.basis_out.samples[o]
                                 : Vec2{0, 0};
            out << si << "\t" << wi << "\t" << wl.window.center.x << "\t"
                << wl.window.center.y << "\t" << wl.window.center.z << "\t"
                << pos.x << "\t" << pos.y << "\t"
                << (o < wl.law_in.size() ? std::arg(wl.law_in[o]) : 0.0) << "\t"
                << (o < wl.law_out.size() ? std::arg(wl.law_out[o]) : 0.0)
                << "\n";
          }
        }
      }
      write_text_file((fs::path(out_dir) / "phase_laws.tsv").string(), out.str());
    }
  }
}

}  // namespace umi
