#ifndef DENSEMAP_H
#define DENSEMAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum DmStatus {
  DM_STATUS_OK = 0,
  DM_STATUS_NULL_POINTER = 1,
  DM_STATUS_INVALID_ARGUMENT = 2,
  DM_STATUS_DIMENSION_MISMATCH = 3,
  DM_STATUS_OUTSIDE_FOV = 4,
  DM_STATUS_EMPTY_INPUT = 5,
  DM_STATUS_PARSE = 6,
  DM_STATUS_IO = 7,
  DM_STATUS_PANIC = 8,
} DmStatus;

/**
 * Fisheye camera (unified projection model).
 */
typedef struct DmCamera DmCamera;

/**
 * Depth map with per-pixel matching costs.
 */
typedef struct DmDepthMap DmDepthMap;

/**
 * Depth filter parameters.
 */
typedef struct DmFilterConfig DmFilterConfig;

/**
 * Point cloud.
 */
typedef struct DmPointCloud DmPointCloud;

/**
 * Hashed TSDF volume.
 */
typedef struct DmVolume DmVolume;

/**
 * Rigid transform `x -> R x + t` with `rotation` stored row-major.
 */
typedef struct DmPose {
  double rotation[9];
  double translation[3];
} DmPose;

/**
 * Statistics of one allocation plus integration pass.
 */
typedef struct DmFuseStats {
  size_t blocks_allocated;
  size_t blocks_touched;
  size_t voxels_updated;
} DmFuseStats;

/**
 * Accuracy and completeness of a reconstruction at tolerances `t1` and `t2`.
 */
typedef struct DmMapQuality {
  double accuracy;
  double completeness;
  double t1;
  double t2;
} DmMapQuality;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dm_version(void);

/**
 * Message describing the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next library call on the same thread.
 */
const char *dm_last_error(void);

/**
 * Creates a camera with mirror parameter `xi`, focal lengths, principal point
 * and image size.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DmStatus dm_camera_new(double xi,
                            double fx,
                            double fy,
                            double cx,
                            double cy,
                            size_t width,
                            size_t height,
                            struct DmCamera **out);

/**
 * # Safety
 * `camera` must be null or a handle from `dm_camera_new` not yet freed.
 */
void dm_camera_free(struct DmCamera *camera);

/**
 * Projects the camera-frame point `xyz[3]` to `uv[2]`. `inside` receives
 * whether the pixel falls inside the image; points that do not project at
 * all yield `DM_STATUS_OUTSIDE_FOV`.
 *
 * # Safety
 * Pointers must be valid for the documented number of elements; `inside` may be null.
 */
enum DmStatus dm_camera_project(const struct DmCamera *camera,
                                const double *xyz,
                                double *uv,
                                bool *inside);

/**
 * Writes the unit viewing ray of pixel position `(u, v)` to `ray[3]`.
 *
 * # Safety
 * `ray` must be valid for three writes.
 */
enum DmStatus dm_camera_back_project(const struct DmCamera *camera,
                                     double u,
                                     double v,
                                     double *ray);

/**
 * Creates a depth map from `width * height` row-major ranges (0 or
 * non-finite marks invalid). `best_cost` and `second_cost` may be null; they
 * default to a perfect, unambiguous match (0 and 1).
 *
 * # Safety
 * Non-null arrays must hold `width * height` elements.
 */
enum DmStatus dm_depth_new(size_t width,
                           size_t height,
                           const float *depth,
                           const float *best_cost,
                           const float *second_cost,
                           struct DmDepthMap **out);

/**
 * Reads a single-channel PFM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum DmStatus dm_depth_read_pfm(const char *path_, struct DmDepthMap **out);

/**
 * Writes the ranges as a single-channel PFM file.
 *
 * # Safety
 * `depth` must be a live handle and `path` a NUL-terminated string.
 */
enum DmStatus dm_depth_write_pfm(const struct DmDepthMap *depth, const char *path_);

/**
 * Width in pixels, or 0 for a null handle.
 *
 * # Safety
 * `depth` must be null or a live handle.
 */
size_t dm_depth_width(const struct DmDepthMap *depth);

/**
 * Height in pixels, or 0 for a null handle.
 *
 * # Safety
 * `depth` must be null or a live handle.
 */
size_t dm_depth_height(const struct DmDepthMap *depth);

/**
 * Number of valid pixels, or 0 for a null handle.
 *
 * # Safety
 * `depth` must be null or a live handle.
 */
size_t dm_depth_valid_count(const struct DmDepthMap *depth);

/**
 * Copies the ranges into `out`, which must hold `len == width * height` floats.
 *
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum DmStatus dm_depth_copy(const struct DmDepthMap *depth, float *out, size_t len);

/**
 * # Safety
 * `depth` must be null or a live handle.
 */
void dm_depth_free(struct DmDepthMap *depth);

/**
 * Default filter parameters with all three filters enabled.
 *
 * # Safety
 * `out` must be writable.
 */
enum DmStatus dm_filter_config_new(struct DmFilterConfig **out);

/**
 * Sets one numeric parameter: `alpha_upper`, `alpha_lower`, `horizon_row`
 * (negative for half the height), `beta`, `gamma`, `delta`,
 * `consistency_window`, or the switches `enable_cost`, `enable_uniqueness`,
 * `enable_consistency` (non-zero enables).
 *
 * # Safety
 * `config` must be a live handle and `key` a NUL-terminated string.
 */
enum DmStatus dm_filter_config_set(struct DmFilterConfig *config, const char *key, double value);

/**
 * # Safety
 * `config` must be null or a live handle.
 */
void dm_filter_config_free(struct DmFilterConfig *config);

/**
 * Applies the enabled filters in order (cost, uniqueness, consistency) and
 * returns a new depth map.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DmStatus dm_filter_apply(const struct DmFilterConfig *config,
                              const struct DmDepthMap *depth,
                              struct DmDepthMap **out);

/**
 * Creates an empty volume. `local_size[3]` gives the edge lengths of the
 * region kept in memory around `center[3]`; pass null for the 60 x 60 x 3 m
 * default.
 *
 * # Safety
 * `center` must hold three doubles, `local_size` three doubles or null.
 */
enum DmStatus dm_volume_new(double voxel_size,
                            double mu,
                            uint16_t w_max,
                            const double *local_size,
                            const double *center,
                            struct DmVolume **out);

/**
 * Allocates the blocks seen by `depth` and integrates it. `world_to_camera`
 * maps world points into the camera frame. `stats` may be null.
 *
 * # Safety
 * Handles must be live; `world_to_camera` must point to a pose.
 */
enum DmStatus dm_volume_fuse(struct DmVolume *volume,
                             const struct DmDepthMap *depth,
                             const struct DmCamera *camera,
                             const struct DmPose *world_to_camera,
                             struct DmFuseStats *stats);

/**
 * Recenters the local region on `position[3]`, archiving blocks that left it.
 * `moved` (nullable) receives the number of archived blocks.
 *
 * # Safety
 * `volume` must be live and `position` hold three doubles.
 */
enum DmStatus dm_volume_prune(struct DmVolume *volume, const double *position, size_t *moved);

/**
 * Counts of in-memory and archived blocks. Either output may be null.
 *
 * # Safety
 * `volume` must be live.
 */
enum DmStatus dm_volume_block_counts(const struct DmVolume *volume,
                                     size_t *active,
                                     size_t *inactive);

/**
 * Extracts the zero-crossing surface as a point cloud, keeping blocks observed
 * at least `min_block_observations` times and voxels with weight at least
 * `min_voxel_weight`.
 *
 * # Safety
 * `volume` must be live and `out` writable.
 */
enum DmStatus dm_volume_extract(const struct DmVolume *volume,
                                uint32_t min_block_observations,
                                uint16_t min_voxel_weight,
                                struct DmPointCloud **out);

/**
 * # Safety
 * `volume` must be null or a live handle.
 */
void dm_volume_free(struct DmVolume *volume);

/**
 * Creates a cloud from `count` points stored as consecutive `x, y, z` doubles.
 *
 * # Safety
 * `xyz` must hold `3 * count` doubles (may be null when `count` is 0).
 */
enum DmStatus dm_cloud_new(const double *xyz, size_t count, struct DmPointCloud **out);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t dm_cloud_len(const struct DmPointCloud *cloud);

/**
 * Copies up to `capacity` points into `xyz` as consecutive `x, y, z`
 * doubles; `written` (nullable) receives the number of points copied.
 *
 * # Safety
 * `xyz` must be valid for `3 * capacity` writes.
 */
enum DmStatus dm_cloud_copy_points(const struct DmPointCloud *cloud,
                                   double *xyz,
                                   size_t capacity,
                                   size_t *written);

/**
 * Reads a PLY file (ASCII or binary little endian, `x y z` vertex properties).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum DmStatus dm_cloud_read_ply(const char *path_, struct DmPointCloud **out);

/**
 * Writes a PLY file, binary little endian when `binary` is true.
 *
 * # Safety
 * `cloud` must be live and `path` a NUL-terminated string.
 */
enum DmStatus dm_cloud_write_ply(const struct DmPointCloud *cloud, const char *path_, bool binary);

/**
 * # Safety
 * `cloud` must be null or a live handle.
 */
void dm_cloud_free(struct DmPointCloud *cloud);

/**
 * Fraction of `reconstruction` points within `t1` of the ground truth
 * (accuracy) and of `ground_truth` points within `t2` of the reconstruction
 * (completeness).
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DmStatus dm_accuracy_completeness(const struct DmPointCloud *reconstruction,
                                       const struct DmPointCloud *ground_truth,
                                       double t1,
                                       double t2,
                                       struct DmMapQuality *out);

/**
 * Runs the full mapping pipeline described by a `key = value` configuration
 * file and writes its outputs. `frames_processed` and `quality` are nullable;
 * `quality` receives the result at the first configured tolerance.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string.
 */
enum DmStatus dm_run_pipeline(const char *config_path,
                              size_t *frames_processed,
                              struct DmMapQuality *quality);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DENSEMAP_H */
