#ifndef LTS_FFI_H
#define LTS_FFI_H

#include <stddef.h>
#include <stdint.h>

/**
 * Which sign convention at the level the local time uses.
 */
typedef enum LtsSide {
  LTS_SIDE_RIGHT = 0,
  LTS_SIDE_LEFT = 1,
  LTS_SIDE_SYMMETRIC = 2,
} LtsSide;

/**
 * Result codes. `Ok` is 0; everything else is an error.
 */
typedef enum LtsStatus {
  LTS_STATUS_OK = 0,
  LTS_STATUS_NULL_POINTER = 1,
  LTS_STATUS_INVALID_ARGUMENT = 2,
  LTS_STATUS_NUMERIC = 3,
  LTS_STATUS_RESOLUTION = 4,
  LTS_STATUS_UNAVAILABLE = 5,
  LTS_STATUS_IO = 6,
  LTS_STATUS_PANIC = 7,
} LtsStatus;

/**
 * Opaque sample path on a uniform time grid.
 */
typedef struct LtsPath LtsPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lts_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`). Returns the full message length
 * without the terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t lts_last_error(char *buf, size_t len);

/**
 * Standard Brownian motion on `[0, 1]` with `2^dt_exponent` steps, from
 * stream `stream` of `seed`.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum LtsStatus lts_brownian_path(uint32_t dt_exponent,
                                 uint64_t seed,
                                 uint64_t stream,
                                 struct LtsPath **out);

/**
 * Skew Brownian motion with parameter `beta` (`|beta| < 1/2`) driven by the
 * same Brownian stream [`lts_brownian_path`] would return.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum LtsStatus lts_skew_path(double beta,
                             uint32_t dt_exponent,
                             uint64_t seed,
                             uint64_t stream,
                             struct LtsPath **out);

/**
 * Path through `values[0..len]` on a uniform grid over `[0, t_end]`.
 *
 * # Safety
 * `values` must be valid for `len` reads; `out` for one pointer write.
 */
enum LtsStatus lts_path_from_values(const double *values,
                                    size_t len,
                                    double t_end,
                                    struct LtsPath **out);

/**
 * Number of grid nodes, or 0 for a null handle.
 *
 * # Safety
 * `path` must be null or a live handle.
 */
size_t lts_path_len(const struct LtsPath *path);

/**
 * Copies the first `min(len, lts_path_len)` values into `buf`.
 *
 * # Safety
 * `path` must be a live handle and `buf` valid for `len` writes.
 */
enum LtsStatus lts_path_values(const struct LtsPath *path, double *buf, size_t len);

/**
 * Tanaka local time of `path` at `level`, as a new path. `side` is an
 * [`LtsSide`] value.
 *
 * # Safety
 * `path` must be a live handle; `out` valid for one pointer write.
 */
enum LtsStatus lts_local_time(const struct LtsPath *path,
                              double level,
                              int32_t side,
                              struct LtsPath **out);

/**
 * Occupation-window local time with window width `eps`, as a new path.
 *
 * # Safety
 * `path` must be a live handle; `out` valid for one pointer write.
 */
enum LtsStatus lts_occupation_local_time(const struct LtsPath *path,
                                         double level,
                                         double eps,
                                         int32_t side,
                                         struct LtsPath **out);

/**
 * Terminal value of a path, written to `out`.
 *
 * # Safety
 * `path` must be a live handle; `out` valid for one write.
 */
enum LtsStatus lts_path_terminal(const struct LtsPath *path, double *out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `path` must be null or a live handle not freed before.
 */
void lts_path_free(struct LtsPath *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LTS_FFI_H */
