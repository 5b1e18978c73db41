/* umi.h - C API for the umi ultrasound matrix imaging library.
 *
 * Opaque handles plus integer status codes. Every function returning
 * umi_status yields UMI_OK (0) on success; on failure the thread-local
 * message from umi_last_error() describes what went wrong. Handles are
 * released with the matching *_free call (NULL is ignored).
 */
#ifndef UMI_H
#define UMI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum umi_status {
  UMI_OK = 0,
  UMI_ERR_INVALID_ARGUMENT = 1,
  UMI_ERR_IO = 2,
  UMI_ERR_FORMAT = 3,
  UMI_ERR_RUNTIME = 4
} umi_status;

const char* umi_version(void);
const char* umi_last_error(void);

typedef struct umi_raw umi_raw;
typedef struct umi_focused umi_focused;
typedef struct umi_laws umi_laws;
typedef struct umi_report umi_report;

/* ---- simulation ----------------------------------------------------- */

/* Runs the forward simulator described by a config file (sections
 * [probe], [medium], [screen], [acquire]). */
umi_status umi_simulate_config(const char* config_path, uint64_t seed,
                               int threads, umi_raw** out);

umi_status umi_raw_read(const char* path, umi_raw** out);
umi_status umi_raw_write(const umi_raw* raw, const char* path);
umi_status umi_raw_dims(const umi_raw* raw, uint32_t* n_in, uint32_t* n_out,
                        uint32_t* n_t);
void umi_raw_free(umi_raw* raw);

/* ---- beamforming ---------------------------------------------------- */

/* grid_spec: "x=-6:0.5:6,y=-6:0.5:6,z=28:0.75:32" (mm).
 * output_basis: "transducer" or "fourier". */
umi_status umi_beamform(const umi_raw* raw, const char* grid_spec,
                        double dmax_mm, const char* output_basis, int threads,
                        umi_focused** out);

umi_status umi_focused_read(const char* path, umi_focused** out);
umi_status umi_focused_write(const umi_focused* f, const char* path);
/* Records where the raw matrix lives so later stages can re-beamform. */
umi_status umi_focused_set_raw_path(umi_focused* f, const char* raw_path);
umi_status umi_focused_dims(const umi_focused* f, uint32_t* nx, uint32_t* ny,
                            uint32_t* nz, uint32_t* n_offsets);
/* Confocal image as raw float32 volume plus a .meta sidecar. */
umi_status umi_focused_confocal(const umi_focused* f, const char* volume_path);
void umi_focused_free(umi_focused* f);

/* ---- analysis -------------------------------------------------------- */

/* windows_spec: "grid:2x2,4,3" or "cx,cy,cz,wx,wy,wz;...". Writes
 * metrics.tsv and rpsf_maps.ump into out_dir. */
umi_status umi_rpsf(const umi_focused* f, const char* windows_spec,
                    const char* out_dir);

/* ---- aberration correction ------------------------------------------ */

/* schedule: "1x1:12,3;2x2:9,3;4x4:6,3". raw may be NULL when the focused
 * file records a valid raw path. filter: "auto" / "on" / "off". Writes
 * laws.umt and corrected.umf into out_dir. */
umi_status umi_correct(const umi_focused* f, const umi_raw* raw,
                       const char* schedule, const char* filter,
                       double eps_stop, int threads, const char* out_dir,
                       umi_focused** corrected, umi_laws** laws);

umi_status umi_laws_read(const char* path, umi_laws** out);
umi_status umi_laws_write(const umi_laws* laws, const char* path);
umi_status umi_laws_step_count(const umi_laws* laws, uint32_t* n_steps);
/* Median reciprocity scalar product of a step's windows. */
umi_status umi_laws_step_reciprocity(const umi_laws* laws, uint32_t step,
                                     double* median_scalar);
void umi_laws_free(umi_laws* laws);

/* ---- pipeline -------------------------------------------------------- */

/* Full config-driven run; seed < 0 keeps the config's seed. */
umi_status umi_run(const char* config_path, const char* out_dir, int64_t seed,
                   int threads, umi_report** out);
int umi_report_all_passed(const umi_report* report);
/* Pointer valid until the report is freed. */
const char* umi_report_text(const umi_report* report);
void umi_report_free(umi_report* report);

/* what: "confocal" | "rpsf" | "phase_laws" | "metrics" | "all". */
umi_status umi_export(const char* run_dir, const char* what,
                      const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* UMI_H */
