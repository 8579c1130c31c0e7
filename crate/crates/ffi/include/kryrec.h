/* C interface to the kryrec solver library.
 *
 * Handles (KryrecMatrix, KryrecSpace, KryrecReport) are opaque pointers
 * created and freed by this library. Fallible calls return a KryrecStatus;
 * on failure a detail message is readable through
 * kryrec_last_error_message() (thread-local, valid until the next failing
 * call on the same thread). Vectors are caller-owned double buffers whose
 * length must equal the matrix dimension.
 *
 * Typical sequence-of-systems usage:
 *
 *   KryrecOptions opts;            kryrec_options_init(&opts);
 *   KryrecMatrix *A;               kryrec_matrix_poisson(64, 64, 1, 1, &A);
 *   KryrecSpace  *S;               kryrec_space_new(kryrec_matrix_n(A), 40, &S);
 *   for (first few systems)        kryrec_solve_rgcrot(A, b, n, &opts, S, x, NULL);
 *   kryrec_space_refresh(S, A, &opts);
 *   for (remaining systems)        kryrec_solve_rbicgstab(A, b, n, &opts, S, x, NULL);
 *   kryrec_space_free(S);          kryrec_matrix_free(A);
 */

#ifndef KRYREC_H
#define KRYREC_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Call outcome codes. */
typedef enum KryrecStatus {
  KRYREC_OK = 0,
  KRYREC_ERR_NULL_POINTER = 1,
  KRYREC_ERR_INVALID_ARGUMENT = 2,
  KRYREC_ERR_DIMENSION_MISMATCH = 3,
  KRYREC_ERR_SINGULAR_PRECONDITIONER = 4,
  KRYREC_ERR_GENERATION_FAILED = 5,
  KRYREC_ERR_IO = 6,
  KRYREC_ERR_UTF8 = 7,
  KRYREC_ERR_PANIC = 8,
} KryrecStatus;

/* Solver termination states. */
typedef enum KryrecSolveStatus {
  KRYREC_CONVERGED = 0,
  KRYREC_MAX_ITERATIONS = 1,
  KRYREC_BREAKDOWN = 2,
  KRYREC_STAGNATION = 3,
} KryrecSolveStatus;

/* Opaque handles. */
typedef struct KryrecMatrix KryrecMatrix;
typedef struct KryrecSpace KryrecSpace;
typedef struct KryrecReport KryrecReport;

/* Solve options; initialize with kryrec_options_init, then override. */
typedef struct KryrecOptions {
  /* Convergence tolerance. */
  double tol;
  /* Nonzero: tol is absolute; zero: relative to ||b||. */
  int32_t tol_is_absolute;
  /* Iteration cap in matrix-vector products. */
  uint64_t max_matvecs;
  /* Restart/cycle length for the GMRES family. */
  uint32_t restart_m;
  /* 0 = identity, 1 = Jacobi, 2 = SSOR. */
  uint32_t precond_kind;
  uint32_t precond_sweeps;
  double precond_relax;
} KryrecOptions;

void kryrec_options_init(KryrecOptions *opts);

const char *kryrec_last_error_message(void);
const char *kryrec_status_name(KryrecStatus status);

/* ------------------------------------------------------------------ */
/* matrices                                                            */
/* ------------------------------------------------------------------ */

/* Standard Laplacian; periodic_x nonzero builds the channel-style matrix
 * (periodic in x, walls elsewhere, one anchored cell). */
KryrecStatus kryrec_matrix_poisson(uint32_t nx, uint32_t ny, uint32_t nz,
                                   int32_t periodic_x, KryrecMatrix **out);

/* Laplacian plus first-order upwind convection of strength peclet along
 * the (wx, wy, wz) direction. */
KryrecStatus kryrec_matrix_convection_diffusion(uint32_t nx, uint32_t ny,
                                                uint32_t nz, double peclet,
                                                double wx, double wy,
                                                double wz, KryrecMatrix **out);

/* Laplacian with randomly masked solid cells (identity rows),
 * reproducible from the seed. Porosity must lie in (0.2, 1]. */
KryrecStatus kryrec_matrix_porous(uint32_t nx, uint32_t ny, uint32_t nz,
                                  double porosity, uint64_t seed,
                                  KryrecMatrix **out);

/* Plain-text stencil format (see the library docs). */
KryrecStatus kryrec_matrix_load(const char *path, KryrecMatrix **out);
KryrecStatus kryrec_matrix_save(const KryrecMatrix *matrix, const char *path);

/* Number of unknowns; 0 for a null handle. */
uint64_t kryrec_matrix_n(const KryrecMatrix *matrix);

/* y = A x (uncounted). x and y have length n = kryrec_matrix_n(matrix). */
KryrecStatus kryrec_matrix_matvec(const KryrecMatrix *matrix, const double *x,
                                  double *y, uint64_t n);

void kryrec_matrix_free(KryrecMatrix *matrix);

/* ------------------------------------------------------------------ */
/* recycle spaces                                                      */
/* ------------------------------------------------------------------ */

/* Empty recycle space for dimension-n systems, capped at k_max
 * directions. */
KryrecStatus kryrec_space_new(uint64_t n, uint64_t k_max, KryrecSpace **out);

/* Current dimension of the space; 0 for a null handle. */
uint64_t kryrec_space_dim(const KryrecSpace *space);

/* Re-factor the space against the right-preconditioned operator of this
 * matrix (the operator rBiCGStab iterates). Required after rGCROT built
 * or evolved the space and whenever the matrix or preconditioner changed.
 * Costs k matrix-vector products. */
KryrecStatus kryrec_space_refresh(KryrecSpace *space,
                                  const KryrecMatrix *matrix,
                                  const KryrecOptions *opts);

/* Plain-text checkpoint format. */
KryrecStatus kryrec_space_save(const KryrecSpace *space, const char *path);
KryrecStatus kryrec_space_load(const char *path, KryrecSpace **out);

void kryrec_space_free(KryrecSpace *space);

/* ------------------------------------------------------------------ */
/* solves (x_out has length n; report may be NULL)                     */
/* ------------------------------------------------------------------ */

/* Restarted GMRES, left preconditioning. */
KryrecStatus kryrec_solve_gmres(const KryrecMatrix *matrix, const double *b,
                                uint64_t n, const KryrecOptions *opts,
                                double *x_out, KryrecReport **report);

/* BiCGStab, right preconditioning. */
KryrecStatus kryrec_solve_bicgstab(const KryrecMatrix *matrix, const double *b,
                                   uint64_t n, const KryrecOptions *opts,
                                   double *x_out, KryrecReport **report);

/* Recycling GCROT, left preconditioning; the space evolves in place and
 * carries to the next system of a sequence. */
KryrecStatus kryrec_solve_rgcrot(const KryrecMatrix *matrix, const double *b,
                                 uint64_t n, const KryrecOptions *opts,
                                 KryrecSpace *space, double *x_out,
                                 KryrecReport **report);

/* Recycling BiCGStab, right preconditioning; the space stays frozen for
 * the whole solve and must have been refreshed against this matrix and
 * preconditioner. */
KryrecStatus kryrec_solve_rbicgstab(const KryrecMatrix *matrix,
                                    const double *b, uint64_t n,
                                    const KryrecOptions *opts,
                                    const KryrecSpace *space, double *x_out,
                                    KryrecReport **report);

/* ------------------------------------------------------------------ */
/* reports                                                             */
/* ------------------------------------------------------------------ */

KryrecSolveStatus kryrec_report_status(const KryrecReport *report);
uint64_t kryrec_report_matvecs(const KryrecReport *report);
/* GMRES-family cycles or BiCGStab-family iterations. */
uint64_t kryrec_report_cycles(const KryrecReport *report);
double kryrec_report_final_residual(const KryrecReport *report);
/* Solver workspace in n-vector units. */
uint64_t kryrec_report_storage_nvectors(const KryrecReport *report);
uint64_t kryrec_report_history_len(const KryrecReport *report);
/* Fetch history entry index as (matvec count, residual norm). */
KryrecStatus kryrec_report_history_entry(const KryrecReport *report,
                                         uint64_t index, uint64_t *matvec_out,
                                         double *residual_out);
void kryrec_report_free(KryrecReport *report);

#ifdef __cplusplus
}
#endif

#endif /* KRYREC_H */
