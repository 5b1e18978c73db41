#pragma once

#include <string>
#include <vector>

#include "umi/common.hpp"
#include "umi/probe.hpp"

namespace umi {

/// Transverse voxel lattice plus a list of depth planes. Probe center is
/// at (0,0,0); z runs along the beam axis.
struct VoxelGrid {
  double x0 = 0.0;
  double y0 = 0.0;
  double pitch = 0.5;  // mm, transverse
  int nx = 0;
  int ny = 0;
  std::vector<double> z;  // mm, strictly increasing

  double x(int i) const { return x0 + i * pitch; }
  double y(int j) const { return y0 + j * pitch; }
  int transverse_count() const { return nx * ny; }
  int voxel_index(int ix, int iy) const { return iy * nx + ix; }
  bool in_bounds(int ix, int iy) const {
    return ix >= 0 && ix < nx && iy >= 0 && iy < ny;
  }
  Vec2 voxel_xy(int vox) const { return {x(vox % nx), y(vox / nx)}; }

  void validate() const;

  /// Parses "x=-6:0.5:6,y=-6:0.5:6,z=28:0.75:32" (start:step:stop, all mm).
  static VoxelGrid parse(const std::string& spec);
  std::string spec_string() const;
};

/// Axis-aligned averaging box, midpoint + full extents.
struct SpatialWindow {
  Vec3 center{};
  Vec3 extent{};  // full widths (w_x, w_y, w_z), mm

  bool contains(const Vec3& r) const {
    return std::abs(r.x - center.x) < 0.5 * extent.x &&
           std::abs(r.y - center.y) < 0.5 * extent.y &&
           std::abs(r.z - center.z) < 0.5 * extent.z;
  }
  double volume() const { return extent.x * extent.y * extent.z; }
  void validate() const;
};

/// Number of diffraction-limited resolution cells inside a window,
/// (w_x w_y w_z) / (drho0^2 dz0) evaluated at the window's depth.
double resolution_cell_count(const SpatialWindow& w, const ProbeModel& probe);

/// Parses "cx,cy,cz,wx,wy,wz; ..." into windows.
std::vector<SpatialWindow> parse_windows(const std::string& spec);

/// n-by-n transverse layout of windows with 50% overlap (center spacing
/// w/2) centered on the grid footprint; depth slabs of extent wz tile the
/// z range with 50% overlap as well.
std::vector<SpatialWindow> window_layout(const VoxelGrid& grid, int n_x, int n_y,
                                         double w_x, double w_y, double w_z);

}  // namespace umi
