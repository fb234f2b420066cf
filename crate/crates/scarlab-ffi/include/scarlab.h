#ifndef SCARLAB_H
#define SCARLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScarlabClassification {
  SCARLAB_CLASSIFICATION_NONE = 0,
  SCARLAB_CLASSIFICATION_LATTICE_DEPENDENT = 1,
  SCARLAB_CLASSIFICATION_LATTICE_INDEPENDENT = 2,
  SCARLAB_CLASSIFICATION_UNKNOWN = 3,
} ScarlabClassification;

// Result code of every fallible call.
typedef enum ScarlabStatus {
  SCARLAB_STATUS_OK = 0,
  SCARLAB_STATUS_INVALID_INPUT = 1,
  SCARLAB_STATUS_NUMERICAL = 2,
  SCARLAB_STATUS_NULL_POINTER = 3,
  SCARLAB_STATUS_BUFFER_TOO_SMALL = 4,
  SCARLAB_STATUS_PANIC = 5,
} ScarlabStatus;

// Opaque scar graph.
typedef struct ScarlabGraph ScarlabGraph;

// Opaque GZ state together with its Hamiltonian.
typedef struct ScarlabScar ScarlabScar;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the next
// failing call on the same thread.
const char *scarlab_last_error(void);

// Library version as a static NUL-terminated string.
const char *scarlab_version(void);

// `sn, cn, dn` of `u` at modulus `kappa`.
//
// # Safety
// The output pointers must be valid for writes.
enum ScarlabStatus scarlab_jacobi(double u, double kappa, double *sn, double *cn, double *dn);

// Complete elliptic integral `K(kappa)`.
//
// # Safety
// `out` must be valid for writes.
enum ScarlabStatus scarlab_complete_k(double kappa, double *out);

// Generates a lattice by name (e.g. `"square"`) with `ndims` dimensions.
//
// # Safety
// `kind` must be a NUL-terminated string, `dims` valid for `ndims` reads and
// `out` valid for writes.
enum ScarlabStatus scarlab_graph_generate(const char *kind,
                                          const size_t *dims,
                                          size_t ndims,
                                          struct ScarlabGraph **out);

// Parses graph JSON.
//
// # Safety
// `json` must be a NUL-terminated string and `out` valid for writes.
enum ScarlabStatus scarlab_graph_from_json(const char *json, struct ScarlabGraph **out);

// # Safety
// `g` must come from a `scarlab_graph_*` constructor and not be used again.
void scarlab_graph_free(struct ScarlabGraph *g);

// # Safety
// `g` must be a live graph handle or NULL; `out` valid for writes.
enum ScarlabStatus scarlab_graph_vertices(const struct ScarlabGraph *g, size_t *out);

// Best scar class reachable by re-choosing σ on the CSSE edges.
//
// # Safety
// `g` must be a live graph handle or NULL; `out` valid for writes.
enum ScarlabStatus scarlab_graph_classify(const struct ScarlabGraph *g,
                                          enum ScarlabClassification *out);

// GZ state on `g` at `q = 4K(kappa)·p/denominator`; `helicity` is +1 or
// −1, `j` and `jprime` scale the CSSE and SU(2) bonds.
//
// # Safety
// `g` must be a live graph handle and `out` valid for writes.
enum ScarlabStatus scarlab_scar_new(const struct ScarlabGraph *g,
                                    double spin,
                                    int64_t p,
                                    int64_t denominator,
                                    double kappa,
                                    double gamma,
                                    int helicity_sign,
                                    double j,
                                    double jprime,
                                    struct ScarlabScar **out);

// # Safety
// `s` must come from [`scarlab_scar_new`] and not be used again.
void scarlab_scar_free(struct ScarlabScar *s);

// `‖Hψ − ⟨H⟩ψ‖`.
//
// # Safety
// `s` must be a live scar handle and `out` valid for writes.
enum ScarlabStatus scarlab_scar_residual(const struct ScarlabScar *s, double *out);

// `⟨H⟩`.
//
// # Safety
// `s` must be a live scar handle and `out` valid for writes.
enum ScarlabStatus scarlab_scar_energy(const struct ScarlabScar *s, double *out);

// Copies the amplitudes into `re`/`im` (each of length `len`). When `len`
// is too small, writes the required length to `needed` and returns
// `SCARLAB_STATUS_BUFFER_TOO_SMALL`.
//
// # Safety
// `re` and `im` must be valid for `len` writes, `needed` for one.
enum ScarlabStatus scarlab_scar_amplitudes(const struct ScarlabScar *s,
                                           double *re,
                                           double *im,
                                           size_t len,
                                           size_t *needed);

// Degeneracy at `E_GZ` of the periodic XYZ chain at `q = 4K·p/n`.
// `special` is set to 1 when `q` is a multiple of `K`, `resolved` to 1 when
// the gap audit passes.
//
// # Safety
// All output pointers must be valid for writes.
enum ScarlabStatus scarlab_chain_degeneracy(double spin,
                                            size_t n,
                                            int64_t p,
                                            double kappa,
                                            size_t *count,
                                            size_t *expected,
                                            int *special,
                                            int *resolved);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCARLAB_H */
