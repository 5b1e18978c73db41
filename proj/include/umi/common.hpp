#pragma once

// Shared scalar types and conventions.
//
// Internal units throughout the library: lengths in mm, times in us,
// frequencies in MHz, sound speeds in mm/us. Conversion from SI happens
// only when parsing configs or exporting human-facing tables.

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace umi {

using cfloat = std::complex<float>;
using cdouble = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline double norm(Vec3 a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

inline double deg_to_rad(double d) { return d * pi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / pi; }

/// IO failure (missing file, short read, write error).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, impossible dimensions).
struct FormatError : IoError {
  using IoError::IoError;
};

/// Caller broke an operation contract (basis mismatch, empty window, ...).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace umi
