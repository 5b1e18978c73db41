// umi command-line front end. Talks to the library exclusively through the
// C API in umi.h so it exercises the same surface as external callers.

#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "umi.h"

namespace {

int report_error(const char* verb, umi_status status) {
  std::fprintf(stderr, "umi %s: error (%d): %s\n", verb, static_cast<int>(status),
               umi_last_error());
  return 1;
}

struct RawHandle {
  umi_raw* p = nullptr;
  ~RawHandle() { umi_raw_free(p); }
};
struct FocusedHandle {
  umi_focused* p = nullptr;
  ~FocusedHandle() { umi_focused_free(p); }
};
struct LawsHandle {
  umi_laws* p = nullptr;
  ~LawsHandle() { umi_laws_free(p); }
};
struct ReportHandle {
  umi_report* p = nullptr;
  ~ReportHandle() { umi_report_free(p); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"umi - ultrasound matrix imaging toolkit"};
  app.require_subcommand(1);

  std::int64_t seed = -1;
  int threads = 0;
  app.add_option("--seed", seed, "Random seed (overrides the config)");
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Synthesize a raw reflection matrix");
  std::string sim_config, sim_out;
  sim->add_option("--config", sim_config, "Config file")->required();
  sim->add_option("--out", sim_out, "Output .umr path")->required();

  // beamform
  auto* bf = app.add_subcommand("beamform", "Focused-basis projection");
  std::string bf_in, bf_grid, bf_out, bf_basis = "transducer";
  double bf_dmax = 10.0;
  bf->add_option("--in", bf_in, "Input .umr")->required();
  bf->add_option("--grid", bf_grid, "Grid spec x=a:s:b,y=...,z=...")->required();
  bf->add_option("--dmax", bf_dmax, "Max input-output offset (mm)");
  bf->add_option("--output-basis", bf_basis, "transducer|fourier");
  bf->add_option("--out", bf_out, "Output .umf path")->required();

  // rpsf
  auto* rp = app.add_subcommand("rpsf", "Local RPSF maps and metrics");
  std::string rp_in, rp_windows, rp_out;
  rp->add_option("--in", rp_in, "Input .umf")->required();
  rp->add_option("--windows", rp_windows, "grid:NxM,w_rho,w_z or explicit list")
      ->required();
  rp->add_option("--out", rp_out, "Output directory")->required();

  // correct
  auto* co = app.add_subcommand("correct", "Multi-scale aberration correction");
  std::string co_in, co_raw, co_schedule, co_filter = "auto", co_out;
  double co_eps = 0.2;
  co->add_option("--in", co_in, "Input .umf")->required();
  co->add_option("--raw", co_raw, "Raw .umr (default: path recorded in the .umf)");
  co->add_option("--schedule", co_schedule, "e.g. 1x1:12,3;2x2:9,3;4x4:6,3")
      ->required();
  co->add_option("--filter", co_filter, "auto|on|off");
  co->add_option("--eps-stop", co_eps, "Reciprocity stop threshold");
  co->add_option("--out", co_out, "Output directory")->required();

  // run
  auto* run = app.add_subcommand("run", "Config-driven end-to-end pipeline");
  std::string run_config, run_out;
  run->add_option("--config", run_config, "Pipeline config")->required();
  run->add_option("--out", run_out, "Output directory")->required();

  // export
  auto* ex = app.add_subcommand("export", "Re-export run artifacts");
  std::string ex_run, ex_what = "all", ex_out;
  ex->add_option("--run", ex_run, "Finished run directory")->required();
  ex->add_option("--what", ex_what, "confocal|rpsf|phase_laws|metrics|all");
  ex->add_option("--out", ex_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    RawHandle raw;
    umi_status st = umi_simulate_config(sim_config.c_str(),
                                        seed < 0 ? 1u : static_cast<uint64_t>(seed),
                                        threads, &raw.p);
    if (st != UMI_OK) return report_error("simulate", st);
    st = umi_raw_write(raw.p, sim_out.c_str());
    if (st != UMI_OK) return report_error("simulate", st);
    uint32_t ni = 0, no = 0, nt = 0;
    umi_raw_dims(raw.p, &ni, &no, &nt);
    std::printf("wrote %s (%u x %u x %u)\n", sim_out.c_str(), ni, no, nt);
    return 0;
  }

  if (bf->parsed()) {
    RawHandle raw;
    umi_status st = umi_raw_read(bf_in.c_str(), &raw.p);
    if (st != UMI_OK) return report_error("beamform", st);
    FocusedHandle f;
    st = umi_beamform(raw.p, bf_grid.c_str(), bf_dmax, bf_basis.c_str(), threads,
                      &f.p);
    if (st != UMI_OK) return report_error("beamform", st);
    umi_focused_set_raw_path(f.p, bf_in.c_str());
    st = umi_focused_write(f.p, bf_out.c_str());
    if (st != UMI_OK) return report_error("beamform", st);
    uint32_t nx = 0, ny = 0, nz = 0, nf = 0;
    umi_focused_dims(f.p, &nx, &ny, &nz, &nf);
    std::printf("wrote %s (%u x %u x %u voxels, %u offsets)\n", bf_out.c_str(), nx,
                ny, nz, nf);
    return 0;
  }

  if (rp->parsed()) {
    FocusedHandle f;
    umi_status st = umi_focused_read(rp_in.c_str(), &f.p);
    if (st != UMI_OK) return report_error("rpsf", st);
    st = umi_rpsf(f.p, rp_windows.c_str(), rp_out.c_str());
    if (st != UMI_OK) return report_error("rpsf", st);
    std::printf("wrote %s/metrics.tsv and %s/rpsf_maps.ump\n", rp_out.c_str(),
                rp_out.c_str());
    return 0;
  }

  if (co->parsed()) {
    FocusedHandle f;
    umi_status st = umi_focused_read(co_in.c_str(), &f.p);
    if (st != UMI_OK) return report_error("correct", st);
    RawHandle raw;
    if (!co_raw.empty()) {
      st = umi_raw_read(co_raw.c_str(), &raw.p);
      if (st != UMI_OK) return report_error("correct", st);
    }
    FocusedHandle corrected;
    LawsHandle laws;
    st = umi_correct(f.p, raw.p, co_schedule.c_str(), co_filter.c_str(), co_eps,
                     threads, co_out.c_str(), &corrected.p, &laws.p);
    if (st != UMI_OK) return report_error("correct", st);
    uint32_t n_steps = 0;
    umi_laws_step_count(laws.p, &n_steps);
    for (uint32_t s = 0; s < n_steps; ++s) {
      double med = 0;
      if (umi_laws_step_reciprocity(laws.p, s, &med) == UMI_OK)
        std::printf("step %u: median reciprocity scalar %.3f\n", s + 1, med);
    }
    std::printf("wrote %s/corrected.umf and %s/laws.umt\n", co_out.c_str(),
                co_out.c_str());
    return 0;
  }

  if (run->parsed()) {
    ReportHandle rep;
    umi_status st = umi_run(run_config.c_str(), run_out.c_str(), seed, threads,
                            &rep.p);
    if (st != UMI_OK) return report_error("run", st);
    std::printf("%s", umi_report_text(rep.p));
    return umi_report_all_passed(rep.p) ? 0 : 1;
  }

  if (ex->parsed()) {
    umi_status st = umi_export(ex_run.c_str(), ex_what.c_str(), ex_out.c_str());
    if (st != UMI_OK) return report_error("export", st);
    const char* note = umi_last_error();
    if (note && note[0]) std::printf("%s\n", note);
    return 0;
  }

  return 0;
}
