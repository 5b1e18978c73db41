#include "umi.h"

#include <cstring>
#include <filesystem>
#include <memory>

#include "umi/pipeline.hpp"

namespace {

thread_local std::string g_last_error;

umi_status fail(umi_status code, const char* what) {
  g_last_error = what ? what : "unknown error";
  return code;
}

template <typename F>
umi_status guarded(F&& fn) {
  try {
    fn();
    return UMI_OK;
  } catch (const umi::FormatError& e) {
    return fail(UMI_ERR_FORMAT, e.what());
  } catch (const umi::IoError& e) {
    return fail(UMI_ERR_IO, e.what());
  } catch (const umi::ContractError& e) {
    return fail(UMI_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(UMI_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(UMI_ERR_RUNTIME, e.what());
  }
}

}  // namespace

struct umi_raw {
  std::shared_ptr<umi::ReflectionMatrixRaw> data;
};
struct umi_focused {
  umi::FocusedRMatrix data;
};
struct umi_laws {
  umi::TransmissionEstimate data;
};
struct umi_report {
  umi::RunReport data;
  std::string text;
};

extern "C" {

const char* umi_version(void) { return "umi 1.0.0 (UMR1/UMF1/UMT1)"; }

const char* umi_last_error(void) { return g_last_error.c_str(); }

umi_status umi_simulate_config(const char* config_path, uint64_t seed,
                               int threads, umi_raw** out) {
  if (!config_path || !out) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    umi::Config cfg = umi::Config::parse_file(config_path);
    umi::ProbeModel probe = umi::probe_from_config(cfg);
    umi::MediumDescription medium = umi::medium_from_config(cfg);
    auto screen = umi::screen_from_config(cfg, seed);
    umi::IlluminationBasis basis = umi::basis_from_config(cfg, probe);
    umi::SimulateOptions opts = umi::simulate_options_from_config(cfg, threads);
    auto raw = std::make_shared<umi::ReflectionMatrixRaw>(
        umi::simulate(medium, screen ? &*screen : nullptr, probe, basis, opts, seed));
    *out = new umi_raw{std::move(raw)};
  });
}

umi_status umi_raw_read(const char* path, umi_raw** out) {
  if (!path || !out) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    *out = new umi_raw{std::make_shared<umi::ReflectionMatrixRaw>(umi::read_raw(path))};
  });
}

umi_status umi_raw_write(const umi_raw* raw, const char* path) {
  if (!raw || !path) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { umi::write_raw(*raw->data, path); });
}

umi_status umi_raw_dims(const umi_raw* raw, uint32_t* n_in, uint32_t* n_out,
                        uint32_t* n_t) {
  if (!raw) return fail(UMI_ERR_INVALID_ARGUMENT, "null handle");
  if (n_in) *n_in = static_cast<uint32_t>(raw->data->n_in);
  if (n_out) *n_out = static_cast<uint32_t>(raw->data->n_out);
  if (n_t) *n_t = static_cast<uint32_t>(raw->data->n_t);
  return UMI_OK;
}

void umi_raw_free(umi_raw* raw) { delete raw; }

umi_status umi_beamform(const umi_raw* raw, const char* grid_spec,
                        double dmax_mm, const char* output_basis, int threads,
                        umi_focused** out) {
  if (!raw || !grid_spec || !out)
    return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    umi::BeamformSettings s;
    s.grid = umi::VoxelGrid::parse(grid_spec);
    s.dmax_mm = dmax_mm;
    s.threads = threads;
    std::string rep = output_basis ? output_basis : "transducer";
    if (rep == "fourier")
      s.out_rep = umi::OutputRep::Fourier;
    else if (rep != "transducer")
      throw umi::ContractError("unknown output basis: " + rep);
    auto f = new umi_focused{umi::beamform(raw->data, s)};
    *out = f;
  });
}

umi_status umi_focused_read(const char* path, umi_focused** out) {
  if (!path || !out) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    auto f = new umi_focused{umi::read_focused(path)};
    // Reattach the raw matrix when its recorded path resolves, either as
    // given or relative to the .umf location.
    if (!f->data.raw_path.empty()) {
      std::filesystem::path rp(f->data.raw_path);
      if (!std::filesystem::exists(rp))
        rp = std::filesystem::path(path).parent_path() / rp;
      if (std::filesystem::exists(rp)) {
        f->data.raw =
            std::make_shared<umi::ReflectionMatrixRaw>(umi::read_raw(rp.string()));
        if (f->data.receive.rep == umi::OutputRep::Fourier)
          f->data.receive = umi::prepare_receive_rep(*f->data.raw, f->data.settings);
      }
    }
    *out = f;
  });
}

umi_status umi_focused_write(const umi_focused* f, const char* path) {
  if (!f || !path) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { umi::write_focused(f->data, path); });
}

umi_status umi_focused_set_raw_path(umi_focused* f, const char* raw_path) {
  if (!f || !raw_path) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  f->data.raw_path = raw_path;
  return UMI_OK;
}

umi_status umi_focused_dims(const umi_focused* f, uint32_t* nx, uint32_t* ny,
                            uint32_t* nz, uint32_t* n_offsets) {
  if (!f) return fail(UMI_ERR_INVALID_ARGUMENT, "null handle");
  if (nx) *nx = static_cast<uint32_t>(f->data.grid.nx);
  if (ny) *ny = static_cast<uint32_t>(f->data.grid.ny);
  if (nz) *nz = static_cast<uint32_t>(f->data.grid.z.size());
  if (n_offsets) *n_offsets = static_cast<uint32_t>(f->data.n_offsets());
  return UMI_OK;
}

umi_status umi_focused_confocal(const umi_focused* f, const char* volume_path) {
  if (!f || !volume_path) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { umi::write_volume(umi::confocal(f->data), volume_path); });
}

void umi_focused_free(umi_focused* f) { delete f; }

umi_status umi_rpsf(const umi_focused* f, const char* windows_spec,
                    const char* out_dir) {
  if (!f || !windows_spec || !out_dir)
    return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    std::filesystem::create_directories(out_dir);
    auto windows = umi::windows_from_config(windows_spec, f->data.grid, f->data.probe);
    umi::RpsfStack stack = umi::analyze_windows(f->data, windows);
    umi::write_text_file((std::filesystem::path(out_dir) / "metrics.tsv").string(),
                         umi::rpsf_metrics_table(stack));
    umi::write_rpsf_maps(stack,
                         (std::filesystem::path(out_dir) / "rpsf_maps.ump").string());
  });
}

umi_status umi_correct(const umi_focused* f, const umi_raw* raw,
                       const char* schedule, const char* filter,
                       double eps_stop, int threads, const char* out_dir,
                       umi_focused** corrected, umi_laws** laws) {
  if (!f || !schedule || !out_dir)
    return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    umi::FocusedRMatrix work = f->data;
    if (raw) {
      work.raw = raw->data;
      if (work.receive.rep == umi::OutputRep::Fourier && !work.receive.transformed)
        work.receive = umi::prepare_receive_rep(*work.raw, work.settings);
    }
    if (!work.raw)
      throw umi::ContractError(
          "correction needs the raw matrix (pass it or record raw_path)");
    umi::MultiscaleOptions opts;
    std::string filt = filter ? filter : "off";
    opts.use_filter = filt == "auto" || filt == "on";
    opts.eps_stop = eps_stop > 0 ? eps_stop : 0.2;
    opts.threads = threads;
    auto sched = umi::parse_schedule(schedule);
    umi::MultiscaleResult res = umi::multiscale_correct(work, sched, opts);
    std::filesystem::create_directories(out_dir);
    res.corrected.raw_path = work.raw_path;
    umi::write_focused(res.corrected,
                       (std::filesystem::path(out_dir) / "corrected.umf").string());
    umi::write_laws(res.estimate,
                    (std::filesystem::path(out_dir) / "laws.umt").string());
    if (corrected) *corrected = new umi_focused{std::move(res.corrected)};
    if (laws) *laws = new umi_laws{std::move(res.estimate)};
  });
}

umi_status umi_laws_read(const char* path, umi_laws** out) {
  if (!path || !out) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { *out = new umi_laws{umi::read_laws(path)}; });
}

umi_status umi_laws_write(const umi_laws* laws, const char* path) {
  if (!laws || !path) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { umi::write_laws(laws->data, path); });
}

umi_status umi_laws_step_count(const umi_laws* laws, uint32_t* n_steps) {
  if (!laws || !n_steps) return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  *n_steps = static_cast<uint32_t>(laws->data.steps.size());
  return UMI_OK;
}

umi_status umi_laws_step_reciprocity(const umi_laws* laws, uint32_t step,
                                     double* median_scalar) {
  if (!laws || !median_scalar)
    return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  if (step >= laws->data.steps.size())
    return fail(UMI_ERR_INVALID_ARGUMENT, "step out of range");
  std::vector<double> s;
  for (const auto& w : laws->data.steps[step].windows) s.push_back(w.scalar);
  if (s.empty()) return fail(UMI_ERR_INVALID_ARGUMENT, "step has no windows");
  std::sort(s.begin(), s.end());
  *median_scalar = s[s.size() / 2];
  return UMI_OK;
}

void umi_laws_free(umi_laws* laws) { delete laws; }

umi_status umi_run(const char* config_path, const char* out_dir, int64_t seed,
                   int threads, umi_report** out) {
  if (!config_path || !out_dir)
    return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    umi::Config cfg = umi::Config::parse_file(config_path);
    std::optional<std::uint64_t> s;
    if (seed >= 0) s = static_cast<std::uint64_t>(seed);
    umi::RunReport rep = umi::run_pipeline(cfg, out_dir, s, threads);
    if (out) {
      auto* r = new umi_report{std::move(rep), {}};
      r->text = r->data.to_text();
      *out = r;
    }
  });
}

int umi_report_all_passed(const umi_report* report) {
  return report && report->data.all_passed() ? 1 : 0;
}

const char* umi_report_text(const umi_report* report) {
  return report ? report->text.c_str() : "";
}

void umi_report_free(umi_report* report) { delete report; }

umi_status umi_export(const char* run_dir, const char* what,
                      const char* out_dir) {
  if (!run_dir || !what || !out_dir)
    return fail(UMI_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    std::vector<std::string> missing;
    umi::export_maps(run_dir, what, out_dir, &missing);
    if (!missing.empty()) {
      std::string msg = "missing artifacts:";
      for (const auto& m : missing) msg += " " + m;
      g_last_error = msg;  // informational, not a failure
    }
  });
}

}  // extern "C"
