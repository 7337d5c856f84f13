/* C interface to the cuelab shared library.
 *
 * All functions return CLB_OK (0) on success. On failure they return
 * CLB_E_ARG for bad inputs (configs, paths, arguments) or CLB_E_INTERNAL for
 * runtime failures, and clb_last_error() describes what went wrong.
 * Handles are opaque; strings returned through out-parameters are owned by
 * the caller and released with clb_free().
 */

#ifndef CUELAB_H
#define CUELAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define CLB_OK 0
#define CLB_E_ARG 1
#define CLB_E_INTERNAL 2

const char* clb_version(void);

/* Thread-local message describing the most recent failure. */
const char* clb_last_error(void);

void clb_free(char* p);

/* An experiment: a validated config plus run options. */
typedef struct clb_experiment clb_experiment;

int clb_experiment_open(const char* config_json, clb_experiment** out);
int clb_experiment_set_seed(clb_experiment* exp, uint64_t seed);
int clb_experiment_set_jobs(clb_experiment* exp, int jobs);

/* Runs one command (gen-manifest, train, eval, landscape, curvature, basin,
 * connect, kcc). args_json may be NULL; it carries per-invocation inputs such
 * as {"checkpoints": [...]} or {"endpoint_p": "...", "endpoint_a": "..."}.
 * Output files are written under out_dir. */
int clb_experiment_run(clb_experiment* exp, const char* command, const char* args_json,
                       const char* out_dir);

/* JSON summary of the most recent successful run; owned by the handle. */
const char* clb_experiment_summary(const clb_experiment* exp);

void clb_experiment_close(clb_experiment* exp);

/* Renders one sprite described by a JSON object
 * {"shape","scale","orientation","color","offset_x","offset_y"} into
 * rgb_out, which must hold 3*resolution*resolution floats (planar RGB). */
int clb_render_sprite(const char* sprite_json, int resolution, float* rgb_out);

/* Builds a dataset manifest for the config's cue set; *json_out is malloc'd. */
int clb_manifest_build(const char* config_json, const char* scheme, char** json_out);

/* Reads a checkpoint header; *json_out is malloc'd. */
int clb_checkpoint_info(const char* path, char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* CUELAB_H */
