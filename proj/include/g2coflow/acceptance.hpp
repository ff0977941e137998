/// @file acceptance.hpp
/// @brief End-to-end verification battery with pinned tolerances.
///
/// Nine independent checks cover the pointwise algebra, the torsion
/// relations, the flow itself, and the persistence layer.  Each check
/// returns a measured summary so a failing run says what it saw, not just
/// that it failed.  The battery is deliberately self-contained: it builds
/// its own states and compares against closed forms or cross-formulations,
/// never against cached outputs of the code under test.

#pragma once

#include <functional>
#include <string>
#include <vector>

namespace g2cf {

struct CriterionResult {
    int index = 0;
    std::string name;
    bool passed = false;
    double seconds = 0.0;
    std::string detail;  // measured values, single line
};

/// Runs all nine checks in order.  `scratch_dir` receives the temporary
/// series/checkpoint files of the persistence check and is created if
/// missing.  A check that throws is reported as failed with the message in
/// `detail`; the remaining checks still run.  `progress`, when set, is
/// called after each check; returning false stops the battery early (the
/// returned vector then holds only the checks that ran).
std::vector<CriterionResult> run_acceptance(
    const std::string& scratch_dir,
    const std::function<bool(const CriterionResult&)>& progress = {});

}  // namespace g2cf
