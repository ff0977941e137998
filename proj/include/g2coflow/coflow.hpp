/// @file coflow.hpp
/// @brief Time integration of the modified Laplacian coflow
/// d/dt psi = Laplacian_psi psi + 2 d((A - tr T) phi) by two independent
/// routes: the direct 4-form rate and the velocity pair (h, X).
///
/// The direct route evaluates d(delta psi) + 2 d((A - tr T) phi), which is
/// exactly closed under the discrete exterior derivative.  The velocity
/// route assembles the same rate from the metric velocity
/// h = -Ric + (1/2) T*T:phi phi + (2A - tr T) T and the vector X = grad tr T
/// through the general first-order deformation of the dual 4-form; the two
/// rates agree to discretization error, which the test suites measure and
/// pin.  The flat structure is an exact discrete fixed point of both.

#pragma once

#include "g2coflow/exterior.hpp"
#include "g2coflow/torsion.hpp"

namespace g2cf {

enum class Route { direct = 0, velocity = 1 };
enum class TimeScheme { euler = 0, rk4 = 1 };
const char* to_string(Route r);
const char* to_string(TimeScheme s);

/// Everything derived from the evolving 4-form at one instant.
struct GeometryCache {
    TensorField phi;
    MetricField m;
    ConnectionField conn;
    CurvatureField curv;
    TorsionTensor torsion;
    double star_residual = 0.0;  // sup |star(phi) - psi| after recovery
    int recover_iterations = 0;  // worst node
};

/// Nodewise 3-form recovery (warm-started), then metric, connection,
/// curvature, torsion.  Throws no_convergence / not_positive with the
/// grid coordinates of the first offending node.
GeometryCache refresh_geometry(const TensorField& psi,
                               const TensorField& phi_guess,
                               const DerivOps& ops, double tol = 1e-12,
                               int max_iter = 60);

struct FlowState {
    TensorField psi;
    double t = 0.0;
    double a = 1.0;  // the constant A of the flow
    GeometryCache cache;
};

/// State with a freshly built cache, cold-started from the standard 3-form.
FlowState make_state(TensorField psi, double t, double a,
                     const DerivOps& ops);

struct FlowVelocity {
    TensorField h;         // symmetric rank-2 metric velocity (= d/dt g / 2)
    TensorField x;         // 1-form: differential of tr T
    TensorField psi_rate;  // 4-form rate assembled from (h, X)
    double skew_defect = 0.0;  // sup of the discarded antisymmetric part
};

/// The velocity pair of the coflow and the 4-form rate it induces.
FlowVelocity velocity(const FlowState& s, const DerivOps& ops);

/// The direct rate d(delta psi) + 2 d((A - tr T) phi); exactly closed.
TensorField psi_rate_direct(const FlowState& s, const DerivOps& ops);

struct StepControls {
    Route route = Route::direct;
    TimeScheme scheme = TimeScheme::rk4;
    /// Coclosedness monitor threshold; breach aborts the step.
    double coclosed_threshold = 1e-8;
    /// Metric positivity floor for the abort check.
    double min_eig_floor = 1e-10;
};

/// Advances the state in place by one step; refreshes the cache and
/// re-checks coclosedness / positivity / finiteness.  Throws
/// stability_violation naming the offending monitor.  Returns the sup of
/// the rate at the step's base point (the k1 stage).
double step(FlowState& s, double dt, const StepControls& c,
            const DerivOps& ops);

/// Step-size policy: cfl * min(axis spacing)^2 / max(1, sup |h|).
double suggested_dt(const FlowState& s, const DerivOps& ops, double cfl);

struct MonitorRow {
    int64_t step = 0;
    double t = 0.0;
    double dt = 0.0;
    double coclosed = 0.0;       // sup |d psi|
    double min_eig = 0.0;        // metric positivity margin
    double star_residual = 0.0;  // cache consistency
    double sup_torsion = 0.0;
    double sup_rate = 0.0;       // sup of the rate leaving this state
    double trace_min = 0.0, trace_max = 0.0;
};

MonitorRow monitor_row(const FlowState& s, const DerivOps& ops, int64_t step,
                       double dt, double sup_rate);

/// Integrates to t_end with a step fixed at the start (suggested_dt at the
/// initial state, or dt_override > 0), shortening only the final step to
/// land on t_end.  Appends one row per completed step (plus the initial
/// state) to `rows`, which survives an abort with the partial trajectory.
FlowState run(FlowState initial, double t_end, const StepControls& c,
              const DerivOps& ops, std::vector<MonitorRow>& rows,
              double cfl = 0.1, double dt_override = 0.0);

/// Centered difference of the metric along the flow against the velocity
/// route's 2h: sup |(g(t+dt) - g(t-dt)) / (2 dt) - 2 h(t)|.  Second order
/// in dt along smooth trajectories.
double metric_velocity_residual(const FlowState& s, double dt,
                                const StepControls& c, const DerivOps& ops);

}  // namespace g2cf
