#ifndef VICSEK_H
#define VICSEK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum VkStatus {
  VK_OK = 0,
  VK_NULL_POINTER = 1,
  VK_INVALID_ARGUMENT = 2,
  VK_OUT_OF_RANGE = 3,
  VK_SOLVER_FAILURE = 4,
  VK_BUFFER_TOO_SMALL = 5,
  VK_PANIC = 6,
} VkStatus;

/**
 * Level-m graph approximation.
 */
typedef struct VkGraph VkGraph;

/**
 * Eigendecomposition of `-Δ` on a graph.
 */
typedef struct VkSpectrum VkSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build the level-`level` graph into `*out`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum VkStatus vk_graph_build(uint32_t level, struct VkGraph **out);

/**
 * Release a graph; null is ignored.
 *
 * # Safety
 * `g` must come from [`vk_graph_build`] and not have been freed.
 */
void vk_graph_free(struct VkGraph *g);

/**
 * Level of the graph, or 0 for null.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
uint32_t vk_graph_level(const struct VkGraph *g);

/**
 * Number of vertices, or 0 for null.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t vk_graph_vertex_count(const struct VkGraph *g);

/**
 * Number of edges, or 0 for null.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t vk_graph_edge_count(const struct VkGraph *g);

/**
 * Id of the center vertex, or `SIZE_MAX` for null.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t vk_graph_root(const struct VkGraph *g);

/**
 * Planar position of vertex `v` in `[-1, 1]^2`.
 *
 * # Safety
 * `g` must be a live graph handle; `x` and `y` must be writable.
 */
enum VkStatus vk_graph_position(const struct VkGraph *g, size_t v, double *x, double *y);

/**
 * Geodesic distance between vertices `u` and `v`.
 *
 * # Safety
 * `g` must be a live graph handle; `out` must be writable.
 */
enum VkStatus vk_graph_distance(const struct VkGraph *g, size_t u, size_t v, double *out);

/**
 * Eigendecompose `-Δ` on `g` into `*out`. The spectrum keeps its own
 * reference to the graph, so `g` may be freed afterwards.
 *
 * # Safety
 * `g` must be a live graph handle; `out` must be writable.
 */
enum VkStatus vk_spectrum_compute(const struct VkGraph *g, struct VkSpectrum **out);

/**
 * Release a spectrum; null is ignored.
 *
 * # Safety
 * `s` must come from [`vk_spectrum_compute`] and not have been freed.
 */
void vk_spectrum_free(struct VkSpectrum *s);

/**
 * Number of eigenpairs (the vertex count), or 0 for null.
 *
 * # Safety
 * `s` must be null or a live spectrum handle.
 */
size_t vk_spectrum_len(const struct VkSpectrum *s);

/**
 * Eigenvalues in ascending order into `buf[0..len]`.
 *
 * # Safety
 * `s` must be a live spectrum handle; `buf` must hold `len` doubles.
 */
enum VkStatus vk_spectrum_eigenvalues(const struct VkSpectrum *s, double *buf, size_t len);

/**
 * Largest residual `‖LΦ − λΦ‖` of the decomposition.
 *
 * # Safety
 * `s` must be a live spectrum handle; `out` must be writable.
 */
enum VkStatus vk_spectrum_max_residual(const struct VkSpectrum *s, double *out);

/**
 * Heat kernel column `y ↦ p_t(x, y)` into `buf[0..len]`.
 *
 * # Safety
 * `s` must be a live spectrum handle; `buf` must hold `len` doubles.
 */
enum VkStatus vk_heat_column(const struct VkSpectrum *s,
                             double t,
                             size_t x,
                             double *buf,
                             size_t len);

/**
 * On-diagonal value `p_t(x, x)`.
 *
 * # Safety
 * `s` must be a live spectrum handle; `out` must be writable.
 */
enum VkStatus vk_heat_diagonal(const struct VkSpectrum *s, double t, size_t x, double *out);

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *vk_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vk_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VICSEK_H */
