#pragma once

#include <Eigen/Dense>
#include <string>

#include "umi/beamform.hpp"

namespace umi {

enum class Side : std::uint8_t { Input = 0, Output = 1 };

/// Basis the aberration laws live in: probe elements or a regular grid of
/// receive/transmit angles (stored as sine pairs).
struct CorrectionBasis {
  enum class Kind : std::uint8_t { Transducer = 0, Fourier = 1 };
  Kind kind = Kind::Transducer;
  std::vector<Vec2> samples;  // element positions (mm) or (sin tx, sin ty)
  std::vector<std::uint8_t> active;
  double kc = 0.0;  // rad/mm at the carrier
  int anchor = 0;   // sample whose phase is pinned to zero

  int count() const { return static_cast<int>(samples.size()); }
  int active_count() const;
  void validate() const;
};

/// Basis matching the matrix provenance on the chosen side: the raw
/// illumination basis at input, the receive representation at output.
CorrectionBasis correction_basis_for(const FocusedRMatrix& f, Side side);

/// Geometric transmission model between a voxel and a basis sample. Phase
/// sign follows the library's demodulation convention (exp(-i w tau)
/// baseband), so distortion phases match the screen phase directly.
cdouble t0_model(const CorrectionBasis& basis, int sample, const Vec3& r);

/// Focused matrix projected onto the correction basis with the geometric
/// component removed: rows are voxels, columns basis samples.
struct DistortionMatrix {
  VoxelGrid grid;
  CorrectionBasis basis;
  Side side = Side::Output;
  std::vector<std::vector<cfloat>> blocks;  // per depth: vox * n_samples

  int n_samples() const { return basis.count(); }
  const cfloat* row(int zi, int vox) const {
    return blocks[zi].data() + static_cast<std::size_t>(vox) * basis.count();
  }
};

DistortionMatrix distortion(const FocusedRMatrix& f, const CorrectionBasis& basis,
                            Side side, int threads = 0);

/// Window-averaged correlation of distorted wavefronts, Hermitian.
struct CorrelationMatrix {
  Eigen::MatrixXcd C;
  SpatialWindow window;
  int n_samples = 0;      // voxels averaged
  double n_cells = 0.0;   // diffraction-limited resolution cells in the window
  std::vector<std::uint8_t> active;
  int anchor = 0;
};

CorrelationMatrix local_correlation(const DistortionMatrix& d, const SpatialWindow& w,
                                    const ProbeModel& probe);

struct IprResult {
  std::vector<cdouble> law;  // unit modulus on active samples, 1 elsewhere
  int iterations = 0;
  bool converged = false;
  std::vector<double> gain_history;  // |C x| norm per iteration
};

/// Fixed point of T <- exp(i arg(C T)), phase anchored afterwards.
IprResult iterative_phase_reversal(const CorrelationMatrix& c,
                                   const std::vector<cdouble>& initial = {},
                                   double tol = 1e-8, int max_iter = 200);

struct EigenAnalysis {
  std::vector<cdouble> first;       // leading eigenvector
  std::vector<double> eigenvalues;  // descending
  double effective_rank = 0.0;      // participation ratio
};

/// Hermitian eigendecomposition of C; comparison baseline for the phase
/// reversal estimator.
EigenAnalysis svd_baseline(const CorrelationMatrix& c);

struct ReciprocityScore {
  double eps = 2.0;     // 2 (1 - scalar)
  double scalar = 0.0;  // Re <T_in, T_out> / N_active, both laws anchored
};

ReciprocityScore reciprocity_score(const std::vector<cdouble>& law_in,
                                   const std::vector<cdouble>& law_out,
                                   const CorrelationMatrix& basis_info);
ReciprocityScore reciprocity_score(const std::vector<cdouble>& law_in,
                                   const std::vector<cdouble>& law_out,
                                   const std::vector<std::uint8_t>& active,
                                   int anchor);

/// |<a, b>| / N_active; gauge-free agreement between two unit-modulus laws.
double circular_correlation(const std::vector<cdouble>& a,
                            const std::vector<cdouble>& b,
                            const std::vector<std::uint8_t>& active);

/// Coherent fraction of a unit-modulus residual law, scaled to the ideal
/// speckle value 4/9 for a flat law.
double coherence_factor(const std::vector<cdouble>& law,
                        const std::vector<std::uint8_t>& active);

// ---------------------------------------------------------------------
// Multi-scale correction

struct ScheduleStep {
  int nx = 1, ny = 1;          // transverse patch counts
  double wx = 0, wy = 0, wz = 0;  // window extents, mm
};

/// Parses "1x1:16,3; 2x2:12,3; 4x4:8,3" (patches : w_rho, w_z).
std::vector<ScheduleStep> parse_schedule(const std::string& spec);
std::string schedule_string(const std::vector<ScheduleStep>& schedule);

struct WindowLaw {
  SpatialWindow window;
  std::vector<cdouble> law_in, law_out;
  double eps = 2.0, scalar = 0.0;
  int iterations_in = 0, iterations_out = 0;
  bool converged_in = false, converged_out = false;
  bool applied = false;  // reciprocity gate passed
  double n_cells = 0.0;
};

struct StepEstimate {
  ScheduleStep step;
  std::vector<WindowLaw> windows;
};

/// Laws of every step, flattened for serialization, plus the composed
/// per-voxel fields actually applied.
struct TransmissionEstimate {
  CorrectionBasis basis_in, basis_out;
  std::vector<StepEstimate> steps;
  std::string schedule_id;
  LawField total_in, total_out;
};

struct MultiscaleOptions {
  bool use_filter = false;
  double filter_scale = 3.0;   // lc = scale * drho0(z)
  double eps_stop = 0.2;       // gate: applied iff scalar >= 1 - eps_stop/2
  bool sequential = true;      // output corrected before input estimation
  int threads = 0;
};

struct MultiscaleResult {
  FocusedRMatrix corrected;
  TransmissionEstimate estimate;
};

/// Gradual compensation: per step, estimate output and input laws over the
/// step's windows, gate on reciprocity, blend over 50%-overlapping windows
/// and re-beamform with the composed laws.
MultiscaleResult multiscale_correct(const FocusedRMatrix& f,
                                    const std::vector<ScheduleStep>& schedule,
                                    const MultiscaleOptions& options);

/// Re-beamforms f with one step of window laws composed on one side.
FocusedRMatrix apply_phase_law(const FocusedRMatrix& f, const StepEstimate& laws,
                               Side side, int threads = 0);

/// Same with a single full-field law.
FocusedRMatrix apply_phase_law_uniform(const FocusedRMatrix& f,
                                       const std::vector<cdouble>& law,
                                       Side side, int threads = 0);

/// Blended per-voxel field from one step's window laws on one side.
LawField blend_window_laws(const StepEstimate& step, const VoxelGrid& grid,
                           int n_channels, Side side);

/// Pointwise product of unit-modulus fields (renormalized).
LawField compose_law_fields(const LawField& a, const LawField& b);

}  // namespace umi
