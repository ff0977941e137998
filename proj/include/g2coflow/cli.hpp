/// @file cli.hpp
/// @brief Run configuration, initial data, checkpoints, and the driver loop.
///
/// A run is described by a key = value text file (one key per line, '#'
/// comments).  `dims` and `t_end` are required; everything else has a
/// documented default.  parse_config reports malformed lines with their line
/// number and key; violated value constraints are reported separately so a
/// caller can tell a typo from a bad experiment.
///
/// Checkpoints are little-endian binary: an 8-byte magic "G2CFCKPT", a u32
/// format version (currently 1) at byte offset 8, the run header (flags,
/// route, scheme, dims, lengths, t, a, dt, step, node count), the 4-form and
/// recovered 3-form payloads node-major, the secondary pair when a dual-route
/// run is checkpointed, and a trailing FNV-1a 64-bit checksum over everything
/// before it.  Storing the recovered 3-form alongside psi is what makes
/// resume bit-exact: the nodewise recovery accepts it unchanged, so the
/// resumed cache equals the interrupted one to the last bit.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "g2coflow/analysis.hpp"
#include "g2coflow/coflow.hpp"
#include "g2coflow/errors.hpp"

namespace g2cf {

enum class RouteChoice { direct = 0, velocity = 1, both = 2 };
enum class InitKind { flat = 0, perturbation = 1 };
const char* to_string(RouteChoice r);
const char* to_string(InitKind k);

struct RunConfig {
    std::array<int, 7> dims{1, 1, 1, 1, 1, 1, 1};
    std::array<double, 7> lengths{};  // default 2*pi per axis
    Scheme scheme = Scheme::spectral;
    RouteChoice route = RouteChoice::direct;
    double a = 1.0;
    double t_end = 0.0;
    double dt = 0.0;  // 0: c_cfl * min_spacing^2 / max(1, sup |h|) at t = 0
    double c_cfl = 0.5;
    int kmax = 4;
    InitKind init = InitKind::flat;
    double amplitude = 0.01;
    std::vector<int> modes{1};
    std::vector<int> axes;  // perturbed axes; empty = every active axis
    uint64_t seed = 0;
    bool seed_set = false;
    double max_amplitude = 0.1;  // positivity safety rail for `amplitude`
    double shi_time = 0.0;       // ladder sample time; 0 = end of run
    std::vector<std::string> monitors{"shi", "evolution"};
    int64_t monitor_every = 1;   // steps between time-series rows
    std::string series_out = "series.csv";
    std::string report_out = "report.txt";
    std::string shi_out;         // ladder table; empty = skip
    std::string checkpoint_out;  // empty = skip
    int64_t checkpoint_every = 0;  // steps; 0 = final checkpoint only
    int workers = 0;               // 0 = hardware default
    double coclosed_threshold = 1e-8;

    RunConfig() {
        for (double& l : lengths) l = 6.283185307179586476925;
    }
};

RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::string& path);

DerivOps make_ops(const RunConfig& cfg);

/// The configured initial 4-form: the constant standard structure, or the
/// standard structure plus the exterior derivative of a seeded band-limited
/// 3-form (so the data is exactly coclosed by construction).  Verifies the
/// coclosedness residual and nodewise positivity; when the perturbation
/// leaves the positive cone the error message reports the largest safe
/// amplitude for the same seed/modes/axes, found by bisection.
TensorField build_initial(const RunConfig& cfg, const DerivOps& ops);

struct Checkpoint {
    uint32_t version = 1;
    RouteChoice route = RouteChoice::direct;
    Scheme scheme = Scheme::spectral;
    std::array<int, 7> dims{1, 1, 1, 1, 1, 1, 1};
    std::array<double, 7> lengths{};
    double t = 0.0;
    double a = 1.0;
    double dt = 0.0;  // the run's fixed step, so a resume continues it
    int64_t step = 0;
    TensorField psi;
    TensorField phi;  // recovered 3-form at the same instant
    bool has_secondary = false;
    TensorField psi2, phi2;  // velocity-route pair of a dual-route run
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

struct RunArtifacts {
    bool aborted = false;
    ErrorCode abort_code = ErrorCode::ok;
    std::string abort_message;
    int64_t steps = 0;  // index of the last completed step
    double dt = 0.0;    // resolved fixed step
    FlowState state;    // last good primary state
    bool has_secondary = false;
    TensorField psi_secondary;
    double final_gap = 0.0;  // sup |psi_direct - psi_velocity| at the end
    /// Ladder samples recorded at time-series rows with t > 0; the row
    /// nearest shi_time carries the full configured depth, the others a
    /// cheap depth-2 ladder for the aggregate columns.
    std::vector<ShiSequences> ladders;
    bool have_sample = false;
    ShiSequences sample;
    bool have_fit = false;
    AnalyticityFit fit;
    bool have_evo = false;
    EvolutionReport evo;
};

/// Runs the configured flow, streaming the time-series CSV row by row and
/// writing the report, ladder table, and checkpoints.  A mid-run stability
/// failure is captured in the artifacts (with the step index in the message)
/// rather than thrown, and everything written so far is kept.
RunArtifacts execute(const RunConfig& cfg);

/// Continues a checkpointed run to cfg.t_end with the checkpoint's own fixed
/// step, after checking the config describes the same run.
RunArtifacts execute_resumed(const RunConfig& cfg, const Checkpoint& from);

/// Reads a ladder table written through `shi_out` back into sequences the
/// analyticity fit accepts.
std::vector<ShiSequences> read_ladders(const std::string& path);

}  // namespace g2cf
