/* C interface of the cadfit engine. Every call returns a cadfit_status; on
 * failure the message and detail of the error are available from
 * cadfit_last_error / cadfit_last_error_detail on the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * cadfit_string_free. Configuration arguments are JSON objects; NULL or ""
 * selects the defaults, unknown keys are rejected. */
#ifndef CADFIT_H
#define CADFIT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define CADFIT_API __attribute__((visibility("default")))
#else
#define CADFIT_API
#endif

typedef enum cadfit_status {
  CADFIT_OK = 0,
  CADFIT_E_INVALID_ARGUMENT = 1,
  CADFIT_E_DEGENERATE = 2,
  CADFIT_E_PARSE = 3,
  CADFIT_E_IO = 4,
  CADFIT_E_NOT_FOUND = 5,
  CADFIT_E_SIZE_LIMIT = 6,
  CADFIT_E_UNOBSERVABLE = 7,
  CADFIT_E_NUMERIC = 8,
  CADFIT_E_INVALID_STATE = 9,
  CADFIT_E_CONFLICT = 10,
  CADFIT_E_INTERNAL = 99
} cadfit_status;

typedef struct cadfit_database cadfit_database;
typedef struct cadfit_trees cadfit_trees;
typedef struct cadfit_scene cadfit_scene;
typedef struct cadfit_service cadfit_service;

CADFIT_API const char* cadfit_version(void);
CADFIT_API const char* cadfit_status_name(cadfit_status status);
CADFIT_API const char* cadfit_last_error(void);
CADFIT_API const char* cadfit_last_error_detail(void);
CADFIT_API void cadfit_string_free(char* text);

/* CAD database. Synthetic options: classes, models_per_class, family_size,
 * family_jitter, seed, samples. */
CADFIT_API cadfit_status cadfit_database_load(const char* manifest_path, cadfit_database** out);
CADFIT_API cadfit_status cadfit_database_synth(const char* options_json, cadfit_database** out);
CADFIT_API cadfit_status cadfit_database_save(const cadfit_database* db, const char* directory);
CADFIT_API size_t cadfit_database_size(const cadfit_database* db);
CADFIT_API void cadfit_database_free(cadfit_database* db);

/* Shape trees, one per class. Tree options: pose_bins, branching, max_depth,
 * cluster_samples. */
CADFIT_API cadfit_status cadfit_trees_build(const cadfit_database* db, const char* class_label,
                                            const char* options_json, cadfit_trees** out);
CADFIT_API cadfit_status cadfit_trees_load_dir(const char* directory, cadfit_trees** out);
CADFIT_API cadfit_status cadfit_trees_save_dir(const cadfit_trees* trees, const char* directory);
CADFIT_API cadfit_status cadfit_trees_save_file(const cadfit_trees* trees, const char* class_label,
                                                const char* path);
CADFIT_API size_t cadfit_trees_count(const cadfit_trees* trees);
CADFIT_API void cadfit_trees_free(cadfit_trees* trees);

/* Scenes. Synthetic options: scene_id, objects, views_per_object, width,
 * height, horizontal_fov_deg, camera_distance, camera_elevation_deg,
 * scale_jitter, min_gap, seed, classes, cad_ids. The ground-truth annotation
 * file is returned through gt_json_out when it is not NULL. */
CADFIT_API cadfit_status cadfit_scene_load(const char* manifest_path, cadfit_scene** out);
CADFIT_API cadfit_status cadfit_scene_synth(const cadfit_database* db, const char* options_json, cadfit_scene** out,
                                            char** gt_json_out);
CADFIT_API cadfit_status cadfit_scene_save(const cadfit_scene* scene, const char* directory);
CADFIT_API void cadfit_scene_free(cadfit_scene* scene);

/* Full annotation of a scene; writes the annotation file text. Options: seed,
 * threads, max_points, final_refine_steps, weights {depth, silhouette,
 * chamfer}, search {max_iterations, exploration_c, refine_trigger_ratio,
 * refine_steps, skip_exhausted}, clone {enabled, tau}. */
CADFIT_API cadfit_status cadfit_annotate(const cadfit_scene* scene, const cadfit_database* db,
                                         const cadfit_trees* trees, const char* options_json,
                                         char** annotations_json_out);
/* As cadfit_annotate, additionally returning the search traces as JSON lines
 * (one line per MCTS iteration, tagged with instance_id) when trace_jsonl_out
 * is not NULL. trace_level: "all" (default when NULL) or "changes" (only
 * iterations that refined or improved the incumbent). */
CADFIT_API cadfit_status cadfit_annotate_traced(const cadfit_scene* scene, const cadfit_database* db,
                                                const cadfit_trees* trees, const char* options_json,
                                                const char* trace_level, char** annotations_json_out,
                                                char** trace_jsonl_out);

/* Evaluation of an annotation file against ground truth. Thresholds:
 * translation_max, rotation_max_deg, scale_ratio_max, scale_mode
 * ("max_axis" | "mean_ratio"). db may be NULL; table_out may be NULL. */
CADFIT_API cadfit_status cadfit_evaluate(const char* predicted_json, const char* ground_truth_json,
                                         const char* thresholds_json, const cadfit_database* db,
                                         char** report_json_out, char** table_out);

/* Review service. Review options: refine_steps, refine_timeout_ms,
 * max_points, journal_file, weights. */
CADFIT_API cadfit_status cadfit_service_create(const cadfit_database* db, cadfit_service** out);
CADFIT_API cadfit_status cadfit_service_add_scene(cadfit_service* service, const cadfit_scene* scene,
                                                  const char* annotations_json, const char* options_json);
/* Blocks until the server stops. token may be NULL (no authentication);
 * port 0 binds an ephemeral port. on_ready, when not NULL, receives the bound
 * port before serving starts. */
typedef void (*cadfit_ready_fn)(int port, void* user);
CADFIT_API cadfit_status cadfit_service_serve(cadfit_service* service, const char* host, int port, const char* token,
                                              cadfit_ready_fn on_ready, void* user);
/* Stops a running cadfit_service_serve from another thread. */
CADFIT_API cadfit_status cadfit_service_stop(cadfit_service* service);
CADFIT_API void cadfit_service_free(cadfit_service* service);

#ifdef __cplusplus
}
#endif

#endif
