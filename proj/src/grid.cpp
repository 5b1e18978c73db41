#include "umi/grid.hpp"

#include <cmath>
#include <sstream>

namespace umi {

void VoxelGrid::validate() const {
  if (nx <= 0 || ny <= 0 || z.empty()) throw ContractError("voxel grid is empty");
  if (!(pitch > 0)) throw ContractError("voxel pitch must be positive");
  for (std::size_t k = 1; k < z.size(); ++k)
    if (!(z[k] > z[k - 1])) throw ContractError("depth planes must be strictly increasing");
  if (z.front() <= 0) throw ContractError("depth planes must be positive");
}

namespace {

struct AxisSpec {
  double start, step, stop;
};

AxisSpec parse_axis(const std::string& token, const std::string& name) {
  std::istringstream in(token);
  AxisSpec a{};
  char c1 = 0, c2 = 0;
  if (!(in >> a.start >> c1 >> a.step >> c2 >> a.stop) || c1 != ':' || c2 != ':')
    throw ContractError("bad grid axis '" + name + "': expected start:step:stop");
  if (!(a.step > 0) || a.stop < a.start - 1e-12)
    throw ContractError("bad grid axis '" + name + "': empty range");
  return a;
}

int axis_count(const AxisSpec& a) {
  return static_cast<int>(std::floor((a.stop - a.start) / a.step + 1e-9)) + 1;
}

}  // namespace

VoxelGrid VoxelGrid::parse(const std::string& spec) {
  AxisSpec ax{}, ay{}, az{};
  bool got_x = false, got_y = false, got_z = false;
  std::istringstream in(spec);
  std::string token;
  while (std::getline(in, token, ',')) {
    std::size_t eq = token.find('=');
    if (eq == std::string::npos) throw ContractError("bad grid spec token: " + token);
    std::string name = token.substr(0, eq);
    std::string body = token.substr(eq + 1);
    if (name == "x") { ax = parse_axis(body, "x"); got_x = true; }
    else if (name == "y") { ay = parse_axis(body, "y"); got_y = true; }
    else if (name == "z") { az = parse_axis(body, "z"); got_z = true; }
    else throw ContractError("unknown grid axis: " + name);
  }
  if (!got_x || !got_y || !got_z) throw ContractError("grid spec needs x, y and z axes");
  if (std::abs(ax.step - ay.step) > 1e-12)
    throw ContractError("grid spec needs equal x and y pitch");
  VoxelGrid g;
  g.x0 = ax.start;
  g.y0 = ay.start;
  g.pitch = ax.step;
  g.nx = axis_count(ax);
  g.ny = axis_count(ay);
  int nz = axis_count(az);
  g.z.resize(nz);
  for (int k = 0; k < nz; ++k) g.z[k] = az.start + k * az.step;
  g.validate();
  return g;
}

std::string VoxelGrid::spec_string() const {
  std::ostringstream out;
  out << "x=" << x0 << ":" << pitch << ":" << x(nx - 1)
      << ",y=" << y0 << ":" << pitch << ":" << y(ny - 1);
  double zstep = z.size() > 1 ? z[1] - z[0] : 1.0;
  out << ",z=" << z.front() << ":" << zstep << ":" << z.back();
  return out.str();
}

void SpatialWindow::validate() const {
  if (!(extent.x > 0 && extent.y > 0 && extent.z > 0))
    throw ContractError("window extents must be positive");
}

double resolution_cell_count(const SpatialWindow& w, const ProbeModel& probe) {
  w.validate();
  double drho0 = diffraction_limit(probe, w.center.z);
  double dz0 = axial_resolution(probe);
  return w.volume() / (drho0 * drho0 * dz0);
}

std::vector<SpatialWindow> parse_windows(const std::string& spec) {
  std::vector<SpatialWindow> out;
  std::istringstream in(spec);
  std::string token;
  while (std::getline(in, token, ';')) {
    if (token.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ws(token);
    SpatialWindow w;
    char c;
    if (!(ws >> w.center.x >> c >> w.center.y >> c >> w.center.z >> c
             >> w.extent.x >> c >> w.extent.y >> c >> w.extent.z))
      throw ContractError("bad window spec: " + token);
    w.validate();
    out.push_back(w);
  }
  if (out.empty()) throw ContractError("window spec is empty");
  return out;
}

std::vector<SpatialWindow> window_layout(const VoxelGrid& grid, int n_x, int n_y,
                                         double w_x, double w_y, double w_z) {
  if (n_x < 1 || n_y < 1) throw ContractError("window layout needs n >= 1");
  SpatialWindow probe_check{{0, 0, grid.z.front()}, {w_x, w_y, w_z}};
  probe_check.validate();

  double cx = grid.x0 + 0.5 * (grid.nx - 1) * grid.pitch;
  double cy = grid.y0 + 0.5 * (grid.ny - 1) * grid.pitch;
  auto centers = [](double mid, int n, double w) {
    // 50% overlap: adjacent centers are w/2 apart, symmetric about mid.
    std::vector<double> c(n);
    for (int i = 0; i < n; ++i) c[i] = mid + (i - 0.5 * (n - 1)) * 0.5 * w;
    return c;
  };
  auto xs = centers(cx, n_x, w_x);
  auto ys = centers(cy, n_y, w_y);

  double z_lo = grid.z.front(), z_hi = grid.z.back();
  std::vector<double> zs;
  if (z_hi - z_lo <= w_z) {
    zs.push_back(0.5 * (z_lo + z_hi));
  } else {
    for (double c = z_lo + 0.5 * w_z; c <= z_hi - 0.5 * w_z + 1e-9; c += 0.5 * w_z)
      zs.push_back(c);
  }

  std::vector<SpatialWindow> out;
  for (double zc : zs)
    for (double yc : ys)
      for (double xc : xs)
        out.push_back({{xc, yc, zc}, {w_x, w_y, w_z}});
  return out;
}

}  // namespace umi
