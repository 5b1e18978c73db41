#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "umi/io.hpp"
#include "umi/simulate.hpp"
#include "umi/beamform.hpp"

using namespace umi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("umi_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int counter;
};
int TempDir::counter = 0;

ProbeModel probe6() {
  return make_grid_probe(6, 6, 0.5, 3.0, 1.8, 4.2, 1.54, deg_to_rad(28.0), {7, 20});
}

ReflectionMatrixRaw tiny_raw(IlluminationBasis basis = {}) {
  ProbeModel p = probe6();
  MediumDescription m;
  m.scatterers.push_back({{0.3, -0.2, 21}, {1.0, 0.4}});
  m.speckle_regions.push_back({{-2, -2, 20}, {2, 2, 22}, 1.5, 0.8});
  SimulateOptions opts;
  opts.noise_power = 0.05;
  return simulate(m, nullptr, p, basis, opts, 13);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("raw matrix round trip is byte exact") {
  TempDir dir;
  ReflectionMatrixRaw raw = tiny_raw();
  std::string f1 = dir.file("a.umr");
  write_raw(raw, f1);
  ReflectionMatrixRaw back = read_raw(f1);
  CHECK(back.signals == raw.signals);
  CHECK(back.n_in == raw.n_in);
  CHECK(back.fs == raw.fs);
  CHECK(back.t0 == raw.t0);
  CHECK(back.probe.element_positions.size() == raw.probe.element_positions.size());
  CHECK(back.probe.element_active == raw.probe.element_active);
  CHECK(back.probe.c0 == raw.probe.c0);
  std::string f2 = dir.file("b.umr");
  write_raw(back, f2);
  CHECK(slurp(f1) == slurp(f2));
}

TEST_CASE("plane-wave raw matrix keeps its angle table") {
  TempDir dir;
  ProbeModel p = probe6();
  IlluminationBasis pw = plane_wave_grid_with_pitch(p, deg_to_rad(10.0));
  ReflectionMatrixRaw raw = tiny_raw(pw);
  write_raw(raw, dir.file("pw.umr"));
  ReflectionMatrixRaw back = read_raw(dir.file("pw.umr"));
  CHECK(back.basis_in.kind == IlluminationBasis::Kind::PlaneWave);
  REQUIRE(back.basis_in.angles.size() == pw.angles.size());
  CHECK(back.basis_in.angular_pitch == pw.angular_pitch);
  CHECK(back.signals == raw.signals);
}

TEST_CASE("empty-signal matrix round-trips") {
  TempDir dir;
  ReflectionMatrixRaw raw = tiny_raw();
  raw.n_t = 0;
  raw.signals.clear();
  write_raw(raw, dir.file("empty.umr"));
  ReflectionMatrixRaw back = read_raw(dir.file("empty.umr"));
  CHECK(back.n_t == 0);
  CHECK(back.signals.empty());
}

TEST_CASE("bad magic and truncation are structured errors") {
  TempDir dir;
  ReflectionMatrixRaw raw = tiny_raw();
  std::string path = dir.file("x.umr");
  write_raw(raw, path);

  std::string bytes = slurp(path);
  bytes[0] = 'X';
  std::ofstream(dir.file("bad.umr"), std::ios::binary) << bytes;
  CHECK_THROWS_WITH_AS(read_raw(dir.file("bad.umr")),
                       doctest::Contains("bad magic"), FormatError);

  std::ofstream(dir.file("short.umr"), std::ios::binary)
      << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(read_raw(dir.file("short.umr")), FormatError);

  CHECK_THROWS_AS(read_raw(dir.file("does_not_exist.umr")), IoError);
}

TEST_CASE("dimension overflow is rejected before allocation") {
  TempDir dir;
  std::ofstream out(dir.file("huge.umr"), std::ios::binary);
  out.write("UMR1", 4);
  std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  std::uint8_t kind = 0;
  out.write(reinterpret_cast<const char*>(&kind), 1);
  std::uint32_t big = 0xFFFFFFF0u;
  for (int k = 0; k < 3; ++k) out.write(reinterpret_cast<const char*>(&big), 4);
  double zeros[4] = {6, 3, 0, 1.54};
  out.write(reinterpret_cast<const char*>(zeros), sizeof(zeros));
  out.close();
  CHECK_THROWS_WITH_AS(read_raw(dir.file("huge.umr")),
                       doctest::Contains("overflow"), FormatError);
}

TEST_CASE("focused matrix round trip preserves blocks and provenance") {
  TempDir dir;
  auto raw = std::make_shared<ReflectionMatrixRaw>(tiny_raw());
  std::string raw_path = dir.file("r.umr");
  write_raw(*raw, raw_path);
  BeamformSettings s;
  s.grid = VoxelGrid::parse("x=-1.5:0.5:1.5,y=-1.5:0.5:1.5,z=20.5:0.5:21.5");
  s.dmax_mm = 1.2;
  FocusedRMatrix f = beamform(raw, s);
  f.raw_path = raw_path;

  std::string f1 = dir.file("a.umf");
  write_focused(f, f1);
  FocusedRMatrix back = read_focused(f1);
  CHECK(back.blocks == f.blocks);
  CHECK(back.grid.nx == f.grid.nx);
  CHECK(back.grid.z == f.grid.z);
  CHECK(back.offsets.steps == f.offsets.steps);
  CHECK(back.raw_path == raw_path);
  CHECK(back.fc == f.fc);
  std::string f2 = dir.file("b.umf");
  write_focused(back, f2);
  CHECK(slurp(f1) == slurp(f2));
}

TEST_CASE("law stack round trip") {
  TempDir dir;
  TransmissionEstimate est;
  est.basis_in.kind = CorrectionBasis::Kind::Transducer;
  est.basis_in.samples = {{0, 0}, {0.5, 0}, {0, 0.5}};
  est.basis_in.active = {1, 1, 0};
  est.basis_in.kc = 12.24;
  est.basis_in.anchor = 0;
  est.basis_out = est.basis_in;
  est.schedule_id = "1x1:4,2";
  StepEstimate step;
  step.step = {1, 1, 4, 4, 2};
  WindowLaw wl;
  wl.window = {{0, 0, 21}, {4, 4, 2}};
  wl.law_in = {{1, 0}, {0, 1}, {1, 0}};
  wl.law_out = {{0.6, 0.8}, {1, 0}, {1, 0}};
  wl.eps = 0.12;
  wl.scalar = 0.94;
  wl.iterations_in = 5;
  wl.iterations_out = 7;
  wl.applied = true;
  wl.converged_in = true;
  wl.converged_out = false;
  wl.n_cells = 25.0;
  step.windows.push_back(wl);
  est.steps.push_back(step);

  std::string path = dir.file("laws.umt");
  write_laws(est, path);
  TransmissionEstimate back = read_laws(path);
  REQUIRE(back.steps.size() == 1);
  const WindowLaw& b = back.steps[0].windows[0];
  CHECK(b.eps == wl.eps);
  CHECK(b.scalar == wl.scalar);
  CHECK(b.iterations_out == 7);
  CHECK(b.applied);
  CHECK(b.converged_in);
  CHECK(!b.converged_out);
  CHECK(b.law_in.size() == 3);
  CHECK(std::abs(b.law_out[0] - cdouble(0.6, 0.8)) < 1e-6);
  CHECK(back.schedule_id == est.schedule_id);
  CHECK(back.basis_in.active == est.basis_in.active);

  std::string p2 = dir.file("laws2.umt");
  write_laws(back, p2);
  CHECK(slurp(path) == slurp(p2));
}

TEST_CASE("volume export writes data and sidecar") {
  TempDir dir;
  ConfocalVolume v;
  v.grid = VoxelGrid::parse("x=0:1:1,y=0:1:1,z=10:1:11");
  v.intensity = {{1, 2, 3, 4}, {5, 6, 7, 8}};
  write_volume(v, dir.file("vol.f32"));
  std::string data = slurp(dir.file("vol.f32"));
  CHECK(data.size() == 8 * sizeof(float));
  std::string meta = read_text_file(dir.file("vol.f32.meta"));
  CHECK(meta.find("nx = 2") != std::string::npos);
  CHECK(meta.find("z_mm = 10 11") != std::string::npos);
}
