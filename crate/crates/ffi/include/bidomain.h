#ifndef BIDOMAIN_H
#define BIDOMAIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BdStatus {
  BD_STATUS_OK = 0,
  BD_STATUS_NULL_POINTER = 1,
  BD_STATUS_INVALID_ARGUMENT = 2,
  BD_STATUS_IO = 3,
  BD_STATUS_CONFIG = 4,
  BD_STATUS_MESH = 5,
  BD_STATUS_SOLVER = 6,
  BD_STATUS_BUFFER_TOO_SMALL = 7,
  BD_STATUS_PANIC = 99,
} BdStatus;

/**
 * A prepared configuration together with its current state.
 */
typedef struct BdExperiment BdExperiment;

/**
 * Triangle mesh.
 */
typedef struct BdMesh BdMesh;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *bd_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bd_version(void);

/**
 * Generates a disk mesh of the given radius and target edge length.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum BdStatus bd_mesh_generate_disk(double radius, double h, struct BdMesh **out);

/**
 * Generates a tissue disk of radius `inner` inside a shell of radius `outer`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum BdStatus bd_mesh_generate_nested_disk(double inner,
                                           double outer,
                                           double h,
                                           struct BdMesh **out);

/**
 * Loads a mesh file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BdStatus bd_mesh_load(const char *path, struct BdMesh **out);

/**
 * Number of vertices, or 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t bd_mesh_vertex_count(const struct BdMesh *mesh);

/**
 * Number of triangles, or 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t bd_mesh_triangle_count(const struct BdMesh *mesh);

/**
 * Copies interleaved `x, y` coordinates into `buf` (length `2 * vertex_count`).
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum BdStatus bd_mesh_vertices(const struct BdMesh *mesh, double *buf, size_t len);

/**
 * Writes the mesh in the text mesh format.
 *
 * # Safety
 * `mesh` must be a live handle and `path` a NUL-terminated string.
 */
enum BdStatus bd_mesh_write(const struct BdMesh *mesh, const char *path);

/**
 * # Safety
 * `mesh` must be null or a handle not yet freed.
 */
void bd_mesh_free(struct BdMesh *mesh);

/**
 * Loads and prepares a configuration file. Relative paths inside the config
 * resolve against the file's directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BdStatus bd_experiment_load(const char *path, struct BdExperiment **out);

/**
 * Prepares a configuration given as text. Mesh files resolve against the
 * current directory.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BdStatus bd_experiment_parse(const char *text, struct BdExperiment **out);

/**
 * # Safety
 * `exp` must be null or a live handle.
 */
size_t bd_experiment_vertex_count(const struct BdExperiment *exp);

/**
 * # Safety
 * `exp` must be null or a live handle.
 */
size_t bd_experiment_probe_count(const struct BdExperiment *exp);

/**
 * Number of steps in the configured horizon.
 *
 * # Safety
 * `exp` must be null or a live handle.
 */
size_t bd_experiment_total_steps(const struct BdExperiment *exp);

/**
 * Current simulated time, or NaN for a null handle.
 *
 * # Safety
 * `exp` must be null or a live handle.
 */
double bd_experiment_time(const struct BdExperiment *exp);

/**
 * Advances the current state by `n_steps` time steps. On solver failure the
 * state is left at the last accepted step.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum BdStatus bd_experiment_advance(struct BdExperiment *exp, size_t n_steps);

/**
 * Restores the initial state.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum BdStatus bd_experiment_reset(struct BdExperiment *exp);

/**
 * Energy of the current state.
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
enum BdStatus bd_experiment_energy(const struct BdExperiment *exp, double *out);

/**
 * Nodal field of the current state: 0 = `u_i`, 1 = `u_e`, 2 = `w`,
 * 3 = `u = u_i − u_e` (zero on shell-only nodes).
 *
 * # Safety
 * `exp` must be a live handle and `buf` must point to `len` writable doubles.
 */
enum BdStatus bd_experiment_field(const struct BdExperiment *exp,
                                  uint32_t which,
                                  double *buf,
                                  size_t len);

/**
 * Transmembrane potential at each configured probe.
 *
 * # Safety
 * `exp` must be a live handle and `buf` must point to `len` writable doubles.
 */
enum BdStatus bd_experiment_probe_values(const struct BdExperiment *exp, double *buf, size_t len);

/**
 * Runs the full configured horizon from the initial state and writes
 * `probes.csv`, `energy.csv` and snapshots into `out_dir`. Partial outputs
 * are written when the solver fails.
 *
 * # Safety
 * `exp` must be a live handle and `out_dir` a NUL-terminated string.
 */
enum BdStatus bd_experiment_run(const struct BdExperiment *exp, const char *out_dir);

/**
 * # Safety
 * `exp` must be null or a handle not yet freed.
 */
void bd_experiment_free(struct BdExperiment *exp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIDOMAIN_H */
