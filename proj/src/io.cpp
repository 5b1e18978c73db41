#include "umi/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace umi {

namespace {

constexpr std::size_t kMaxEntries = 1ull << 33;  // dimension overflow guard

class Writer {
 public:
  explicit Writer(const std::string& path)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failure: " + path_);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  void magic(const char m[4]) { bytes(m, 4); }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void close() {
    out_.close();
    if (!out_) throw IoError("close failure: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open: " + path);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError("truncated file: " + path_);
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void expect_magic(const char m[4]) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0)
      throw FormatError("bad magic in " + path_);
  }
  std::string str() {
    auto n = pod<std::uint32_t>();
    if (n > (1u << 20)) throw FormatError("unreasonable string length in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::string path_;
  std::ifstream in_;
};

void write_probe(Writer& w, const ProbeModel& p) {
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.element_count()));
  w.pod<double>(p.pitch);
  for (int e = 0; e < p.element_count(); ++e) {
    w.pod<double>(p.element_positions[e].x);
    w.pod<double>(p.element_positions[e].y);
    w.pod<std::uint8_t>(p.element_active[e]);
  }
  // Probe parameters beyond the per-element table.
  w.pod<double>(p.aperture.x);
  w.pod<double>(p.aperture.y);
  w.pod<double>(p.center_frequency);
  w.pod<double>(p.bandwidth_lo);
  w.pod<double>(p.bandwidth_hi);
  w.pod<double>(p.directivity_limit);
  w.pod<double>(p.c0);
}

ProbeModel read_probe(Reader& r) {
  ProbeModel p;
  auto n = r.pod<std::uint32_t>();
  if (n == 0 || n > (1u << 24)) throw FormatError("bad element count");
  p.pitch = r.pod<double>();
  p.element_positions.resize(n);
  p.element_active.resize(n);
  for (std::uint32_t e = 0; e < n; ++e) {
    p.element_positions[e].x = r.pod<double>();
    p.element_positions[e].y = r.pod<double>();
    p.element_active[e] = r.pod<std::uint8_t>();
  }
  p.aperture.x = r.pod<double>();
  p.aperture.y = r.pod<double>();
  p.center_frequency = r.pod<double>();
  p.bandwidth_lo = r.pod<double>();
  p.bandwidth_hi = r.pod<double>();
  p.directivity_limit = r.pod<double>();
  p.c0 = r.pod<double>();
  return p;
}

void write_complex_array(Writer& w, const std::vector<cfloat>& data) {
  if (!data.empty()) w.bytes(data.data(), data.size() * sizeof(cfloat));
}

void read_complex_array(Reader& r, std::vector<cfloat>& data, std::size_t n) {
  if (n > kMaxEntries) throw FormatError("dimension overflow");
  data.resize(n);
  if (n) r.bytes(data.data(), n * sizeof(cfloat));
}

void write_law_field(Writer& w, const LawField& f) {
  w.pod<std::uint8_t>(f.flat() ? 0 : 1);
  if (f.flat()) return;
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(f.n_channels));
  w.pod<double>(f.x0);
  w.pod<double>(f.y0);
  w.pod<double>(f.pitch);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(f.nx));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(f.ny));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(f.tables.size()));
  for (const auto& t : f.tables) write_complex_array(w, t);
}

LawField read_law_field(Reader& r) {
  LawField f;
  if (r.pod<std::uint8_t>() == 0) return f;
  f.n_channels = static_cast<int>(r.pod<std::uint32_t>());
  f.x0 = r.pod<double>();
  f.y0 = r.pod<double>();
  f.pitch = r.pod<double>();
  f.nx = static_cast<int>(r.pod<std::uint32_t>());
  f.ny = static_cast<int>(r.pod<std::uint32_t>());
  auto nz = r.pod<std::uint32_t>();
  if (f.n_channels <= 0 || f.nx <= 0 || f.ny <= 0 || nz > (1u << 16))
    throw FormatError("bad law field header");
  f.tables.resize(nz);
  std::size_t per = static_cast<std::size_t>(f.nx) * f.ny * f.n_channels;
  for (auto& t : f.tables) read_complex_array(r, t, per);
  return f;
}

void write_basis(Writer& w, const CorrectionBasis& b) {
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(b.kind));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(b.count()));
  for (int i = 0; i < b.count(); ++i) {
    w.pod<double>(b.samples[i].x);
    w.pod<double>(b.samples[i].y);
    w.pod<std::uint8_t>(b.active[i]);
  }
  w.pod<double>(b.kc);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(b.anchor));
}

CorrectionBasis read_basis(Reader& r) {
  CorrectionBasis b;
  b.kind = static_cast<CorrectionBasis::Kind>(r.pod<std::uint8_t>());
  auto n = r.pod<std::uint32_t>();
  if (n == 0 || n > (1u << 24)) throw FormatError("bad basis sample count");
  b.samples.resize(n);
  b.active.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    b.samples[i].x = r.pod<double>();
    b.samples[i].y = r.pod<double>();
    b.active[i] = r.pod<std::uint8_t>();
  }
  b.kc = r.pod<double>();
  b.anchor = static_cast<int>(r.pod<std::uint32_t>());
  return b;
}

}  // namespace

void write_raw(const ReflectionMatrixRaw& raw, const std::string& path) {
  Writer w(path);
  w.magic("UMR1");
  w.pod<std::uint32_t>(1);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(raw.basis_in.kind));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(raw.n_in));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(raw.n_out));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(raw.n_t));
  w.pod<double>(raw.fs);
  w.pod<double>(raw.fc);
  w.pod<double>(raw.t0);
  w.pod<double>(raw.probe.c0);
  write_probe(w, raw.probe);
  if (raw.basis_in.kind == IlluminationBasis::Kind::PlaneWave) {
    for (const auto& a : raw.basis_in.angles) {
      w.pod<double>(a.x);
      w.pod<double>(a.y);
    }
    w.pod<double>(raw.basis_in.angular_pitch);
  }
  write_complex_array(w, raw.signals);
  w.close();
}

ReflectionMatrixRaw read_raw(const std::string& path) {
  Reader r(path);
  r.expect_magic("UMR1");
  auto version = r.pod<std::uint32_t>();
  if (version != 1) throw FormatError("unsupported UMR1 version");
  ReflectionMatrixRaw raw;
  raw.basis_in.kind = static_cast<IlluminationBasis::Kind>(r.pod<std::uint8_t>());
  raw.n_in = static_cast<int>(r.pod<std::uint32_t>());
  raw.n_out = static_cast<int>(r.pod<std::uint32_t>());
  raw.n_t = static_cast<int>(r.pod<std::uint32_t>());
  if (raw.n_in < 0 || raw.n_out < 0 || raw.n_t < 0 ||
      static_cast<std::size_t>(raw.n_in) * raw.n_out * std::max(raw.n_t, 1) > kMaxEntries)
    throw FormatError("dimension overflow in " + path);
  raw.fs = r.pod<double>();
  raw.fc = r.pod<double>();
  raw.t0 = r.pod<double>();
  double c0 = r.pod<double>();
  raw.probe = read_probe(r);
  raw.probe.c0 = c0;
  if (raw.basis_in.kind == IlluminationBasis::Kind::PlaneWave) {
    raw.basis_in.angles.resize(raw.n_in);
    for (auto& a : raw.basis_in.angles) {
      a.x = r.pod<double>();
      a.y = r.pod<double>();
    }
    raw.basis_in.angular_pitch = r.pod<double>();
  }
  read_complex_array(r, raw.signals,
                     static_cast<std::size_t>(raw.n_in) * raw.n_out * raw.n_t);
  raw.validate();
  return raw;
}

void write_focused(const FocusedRMatrix& f, const std::string& path) {
  Writer w(path);
  w.magic("UMF1");
  w.pod<std::uint32_t>(1);
  w.pod<double>(f.grid.x0);
  w.pod<double>(f.grid.y0);
  w.pod<double>(f.grid.pitch);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(f.grid.nx));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(f.grid.ny));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(f.grid.z.size()));
  for (double z : f.grid.z) w.pod<double>(z);
  w.pod<double>(f.offsets.dmax);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(f.offsets.count()));
  for (auto [dx, dy] : f.offsets.steps) {
    w.pod<std::int16_t>(dx);
    w.pod<std::int16_t>(dy);
  }
  w.pod<double>(f.fc);
  w.pod<double>(f.c0);
  write_probe(w, f.probe);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(f.receive.rep));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(f.receive.angles.size()));
  for (const auto& a : f.receive.angles) {
    w.pod<double>(a.x);
    w.pod<double>(a.y);
  }
  w.str(f.raw_path);
  w.pod<std::uint8_t>(f.linear ? 1 : 0);
  if (f.linear) {
    w.pod<double>(f.linear->x_f);
    w.pod<double>(f.linear->z_f);
  }
  write_law_field(w, f.law_in);
  write_law_field(w, f.law_out);
  for (const auto& block : f.blocks) write_complex_array(w, block);
  w.close();
}

FocusedRMatrix read_focused(const std::string& path) {
  Reader r(path);
  r.expect_magic("UMF1");
  auto version = r.pod<std::uint32_t>();
  if (version != 1) throw FormatError("unsupported UMF1 version");
  FocusedRMatrix f;
  f.grid.x0 = r.pod<double>();
  f.grid.y0 = r.pod<double>();
  f.grid.pitch = r.pod<double>();
  f.grid.nx = static_cast<int>(r.pod<std::uint32_t>());
  f.grid.ny = static_cast<int>(r.pod<std::uint32_t>());
  auto nz = r.pod<std::uint32_t>();
  if (nz == 0 || nz > (1u << 16)) throw FormatError("bad depth count");
  f.grid.z.resize(nz);
  for (auto& z : f.grid.z) z = r.pod<double>();
  double dmax = r.pod<double>();
  auto n_off = r.pod<std::uint32_t>();
  f.offsets.pitch = f.grid.pitch;
  f.offsets.dmax = dmax;
  f.offsets.radius = static_cast<int>(std::floor(dmax / f.grid.pitch + 1e-9));
  int side = 2 * f.offsets.radius + 1;
  f.offsets.reverse.assign(static_cast<std::size_t>(side) * side, -1);
  f.offsets.steps.resize(n_off);
  for (std::uint32_t i = 0; i < n_off; ++i) {
    auto dx = r.pod<std::int16_t>();
    auto dy = r.pod<std::int16_t>();
    f.offsets.steps[i] = {dx, dy};
    if (std::abs(dx) > f.offsets.radius || std::abs(dy) > f.offsets.radius)
      throw FormatError("offset outside table radius");
    f.offsets.reverse[(dy + f.offsets.radius) * side + (dx + f.offsets.radius)] =
        static_cast<int>(i);
  }
  f.offsets.zero_index = f.offsets.index_of(0, 0);
  f.fc = r.pod<double>();
  f.c0 = r.pod<double>();
  f.probe = read_probe(r);
  f.receive.rep = static_cast<OutputRep>(r.pod<std::uint8_t>());
  auto n_ang = r.pod<std::uint32_t>();
  if (n_ang > (1u << 24)) throw FormatError("bad receive angle count");
  f.receive.angles.resize(n_ang);
  for (auto& a : f.receive.angles) {
    a.x = r.pod<double>();
    a.y = r.pod<double>();
  }
  f.raw_path = r.str();
  if (r.pod<std::uint8_t>()) {
    LinearEmulation lin;
    lin.x_f = r.pod<double>();
    lin.z_f = r.pod<double>();
    f.linear = std::make_shared<LinearEmulation>(lin);
  }
  f.law_in = read_law_field(r);
  f.law_out = read_law_field(r);
  f.blocks.resize(nz);
  std::size_t per = static_cast<std::size_t>(f.grid.transverse_count()) * n_off;
  for (auto& block : f.blocks) read_complex_array(r, block, per);
  f.settings.grid = f.grid;
  f.settings.dmax_mm = dmax;
  f.settings.out_rep = f.receive.rep;
  f.settings.fourier_angles = f.receive.angles;
  f.validate();
  return f;
}

void write_laws(const TransmissionEstimate& est, const std::string& path) {
  Writer w(path);
  w.magic("UMT1");
  w.pod<std::uint32_t>(1);
  write_basis(w, est.basis_in);
  write_basis(w, est.basis_out);
  w.str(est.schedule_id);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(est.steps.size()));
  for (const auto& step : est.steps) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(step.step.nx));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(step.step.ny));
    w.pod<double>(step.step.wx);
    w.pod<double>(step.step.wy);
    w.pod<double>(step.step.wz);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(step.windows.size()));
    for (const auto& wl : step.windows) {
      w.pod<double>(wl.window.center.x);
      w.pod<double>(wl.window.center.y);
      w.pod<double>(wl.window.center.z);
      w.pod<double>(wl.window.extent.x);
      w.pod<double>(wl.window.extent.y);
      w.pod<double>(wl.window.extent.z);
      w.pod<double>(wl.eps);
      w.pod<double>(wl.scalar);
      w.pod<double>(wl.n_cells);
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(wl.iterations_in));
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(wl.iterations_out));
      std::uint8_t flags = (wl.applied ? 1 : 0) | (wl.converged_in ? 2 : 0) |
                           (wl.converged_out ? 4 : 0);
      w.pod<std::uint8_t>(flags);
      auto write_law = [&](const std::vector<cdouble>& law) {
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(law.size()));
        for (const auto& v : law) {
          w.pod<float>(static_cast<float>(v.real()));
          w.pod<float>(static_cast<float>(v.imag()));
        }
      };
      write_law(wl.law_in);
      write_law(wl.law_out);
    }
  }
  write_law_field(w, est.total_in);
  write_law_field(w, est.total_out);
  w.close();
}

TransmissionEstimate read_laws(const std::string& path) {
  Reader r(path);
  r.expect_magic("UMT1");
  auto version = r.pod<std::uint32_t>();
  if (version != 1) throw FormatError("unsupported UMT1 version");
  TransmissionEstimate est;
  est.basis_in = read_basis(r);
  est.basis_out = read_basis(r);
  est.schedule_id = r.str();
  auto n_steps = r.pod<std::uint32_t>();
  if (n_steps > (1u << 12)) throw FormatError("bad step count");
  est.steps.resize(n_steps);
  for (auto& step : est.steps) {
    step.step.nx = static_cast<int>(r.pod<std::uint32_t>());
    step.step.ny = static_cast<int>(r.pod<std::uint32_t>());
    step.step.wx = r.pod<double>();
    step.step.wy = r.pod<double>();
    step.step.wz = r.pod<double>();
    auto n_win = r.pod<std::uint32_t>();
    if (n_win > (1u << 20)) throw FormatError("bad window count");
    step.windows.resize(n_win);
    for (auto& wl : step.windows) {
      wl.window.center.x = r.pod<double>();
      wl.window.center.y = r.pod<double>();
      wl.window.center.z = r.pod<double>();
      wl.window.extent.x = r.pod<double>();
      wl.window.extent.y = r.pod<double>();
      wl.window.extent.z = r.pod<double>();
      wl.eps = r.pod<double>();
      wl.scalar = r.pod<double>();
      wl.n_cells = r.pod<double>();
      wl.iterations_in = static_cast<int>(r.pod<std::uint32_t>());
      wl.iterations_out = static_cast<int>(r.pod<std::uint32_t>());
      auto flags = r.pod<std::uint8_t>();
      wl.applied = flags & 1;
      wl.converged_in = flags & 2;
      wl.converged_out = flags & 4;
      auto read_law = [&](std::vector<cdouble>& law) {
        auto n = r.pod<std::uint32_t>();
        if (n > (1u << 24)) throw FormatError("bad law length");
        law.resize(n);
        for (auto& v : law) {
          float re = r.pod<float>();
          float im = r.pod<float>();
          v = cdouble(re, im);
        }
      };
      read_law(wl.law_in);
      read_law(wl.law_out);
    }
  }
  est.total_in = read_law_field(r);
  est.total_out = read_law_field(r);
  return est;
}

void write_volume(const ConfocalVolume& volume, const std::string& path) {
  Writer w(path);
  for (const auto& plane : volume.intensity)
    w.bytes(plane.data(), plane.size() * sizeof(float));
  w.close();
  std::ostringstream meta;
  meta << "layout = z-major float32, (z, y, x)\n";
  meta << "nx = " << volume.grid.nx << "\n";
  meta << "ny = " << volume.grid.ny << "\n";
  meta << "nz = " << volume.grid.z.size() << "\n";
  meta << "pitch_mm = " << volume.grid.pitch << "\n";
  meta << "x0_mm = " << volume.grid.x0 << "\n";
  meta << "y0_mm = " << volume.grid.y0 << "\n";
  meta << "z_mm =";
  for (double z : volume.grid.z) meta << " " << z;
  meta << "\n";
  write_text_file(path + ".meta", meta.str());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failure: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace umi
