/* g2coflow.h - C interface to the coflow laboratory.
 *
 * Everything the command-line tool needs crosses this boundary: parsing a
 * run configuration, executing or resuming a flow, reading the results
 * back, fitting a ladder table, and running the self-check battery.  The
 * C++ objects live behind opaque handles; every entry point returns a
 * status code from the table below and stores a human-readable message
 * retrievable with g2cf_last_error() (thread-local, valid until the next
 * call on the same thread).
 *
 * A run that aborts mid-flight (stability violation) still produces a
 * handle: g2cf_execute returns G2CF_STABILITY_VIOLATION *and* sets *out,
 * so the caller can report how far the run got and where the partial
 * outputs are.  Hard failures (bad config, unreadable checkpoint) return
 * their code with *out left null.
 */

#ifndef G2COFLOW_H
#define G2COFLOW_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes.  Values mirror the core library's error taxonomy and are
 * stable across releases of the same major version. */
enum {
    G2CF_OK = 0,
    G2CF_INVALID_ARGUMENT = 1,
    G2CF_NOT_POSITIVE = 2,       /* 3-form left the positive cone */
    G2CF_NO_CONVERGENCE = 3,     /* iterative 3-form recovery failed */
    G2CF_SINGULAR_METRIC = 4,
    G2CF_STABILITY_VIOLATION = 5, /* coclosedness / positivity lost mid-run */
    G2CF_CONFIG_ERROR = 6,
    G2CF_IO_ERROR = 7,
    G2CF_VERSION_MISMATCH = 8,
    G2CF_CHECKSUM_MISMATCH = 9,
    G2CF_NOT_COCLOSED = 10,
    G2CF_INSUFFICIENT_DATA = 11,  /* too few ladder entries to fit */
    G2CF_INSUFFICIENT_TRAJECTORY = 12,
    G2CF_PARSE_ERROR = 13         /* malformed config text */
};

/* Thread-local message for the most recent failure on this thread; the
 * empty string after a success.  The pointer stays valid until the next
 * g2cf_* call on the same thread. */
const char* g2cf_last_error(void);

/* Stable name for a status code ("ok", "parse error", ...). */
const char* g2cf_status_name(int status);

/* ---- run configuration ------------------------------------------------ */

typedef struct g2cf_config g2cf_config;

/* Parse a key = value configuration.  On success *out owns the parsed
 * config; free it with g2cf_config_free.  Malformed lines give
 * G2CF_PARSE_ERROR with the line number and key in the message; values
 * that fail validation give G2CF_CONFIG_ERROR. */
int g2cf_config_parse_file(const char* path, g2cf_config** out);
int g2cf_config_parse_text(const char* text, g2cf_config** out);

void g2cf_config_free(g2cf_config* cfg);

/* ---- executing a run --------------------------------------------------- */

typedef struct g2cf_run g2cf_run;

/* Run the configured flow to t_end, writing the time series, report,
 * ladder table, and checkpoints the config asks for.  Returns G2CF_OK on a
 * completed run.  A mid-run stability failure returns its code with *out
 * still set (partial outputs are kept on disk); anything that prevents the
 * run from starting returns its code with *out null. */
int g2cf_execute(const g2cf_config* cfg, g2cf_run** out);

/* Continue a checkpointed run to cfg's t_end with the checkpoint's own
 * fixed step.  The config must describe the same run (grid, scheme, route,
 * torsion shift); mismatches return G2CF_CONFIG_ERROR. */
int g2cf_resume(const g2cf_config* cfg, const char* checkpoint_path,
                g2cf_run** out);

void g2cf_run_free(g2cf_run* run);

/* Result getters.  Null-safe: a null run reads as an empty/aborted run. */
int g2cf_run_aborted(const g2cf_run* run);           /* 0 / 1 */
int g2cf_run_abort_code(const g2cf_run* run);        /* status code */
const char* g2cf_run_abort_message(const g2cf_run* run);
int64_t g2cf_run_steps(const g2cf_run* run);         /* last completed step */
double g2cf_run_time(const g2cf_run* run);           /* final flow time */
double g2cf_run_dt(const g2cf_run* run);             /* resolved fixed step */
double g2cf_run_route_gap(const g2cf_run* run);      /* dual-route runs; 0 else */

/* Analyticity fit computed from the run's own ladder samples.  Returns 1
 * and fills the outputs when a non-degenerate fit exists, 0 otherwise.
 * Any output pointer may be null. */
int g2cf_run_fit(const g2cf_run* run, double* c_fit, double* l_fit,
                 int* kmax_used, int* consistent);

/* ---- fitting a ladder table ------------------------------------------- */

/* Read a ladder table (the shi_out CSV of a previous run) and fit the
 * derivative-growth model to its entries.  Returns G2CF_OK and fills the
 * outputs (any may be null); a table with too few usable entries returns
 * G2CF_INSUFFICIENT_DATA, an unreadable or malformed file G2CF_IO_ERROR.
 * `consistent` reports whether the per-order residuals stay within the
 * fit's internal tolerance; `degenerate` flags the all-flat case where the
 * growth rate is pinned to zero. */
int g2cf_fit_ladder_file(const char* path, double* c_fit, double* l_fit,
                         int* kmax_used, int* consistent, int* degenerate);

/* ---- self-check battery ------------------------------------------------ */

/* Called once per criterion, in order.  `passed` is 0/1, `seconds` the
 * wall time, `detail` a one-line measurement summary.  Return 0 to keep
 * going; nonzero stops the battery early. */
typedef int (*g2cf_acceptance_cb)(void* user, int index, const char* name,
                                  int passed, double seconds,
                                  const char* detail);

/* Run the full acceptance battery, using scratch_dir for temporary run
 * outputs.  Returns G2CF_OK when every criterion passes, G2CF_IO_ERROR
 * when the battery itself cannot run, and G2CF_INVALID_ARGUMENT when a
 * criterion fails (the callback has already reported which). */
int g2cf_acceptance(const char* scratch_dir, g2cf_acceptance_cb cb,
                    void* user);

/* ---- version ----------------------------------------------------------- */

const char* g2cf_version(void);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* G2COFLOW_H */
