// Verification battery runner: one line per criterion, nonzero exit when
// anything fails.  The heavy lifting lives in the library so the CLI can run
// the same battery.

#include <cstdio>
#include <filesystem>

#include "g2coflow/acceptance.hpp"

int main() {
    std::string scratch =
        (std::filesystem::temp_directory_path() / "g2cf_acceptance").string();
    std::vector<g2cf::CriterionResult> results = g2cf::run_acceptance(scratch);
    bool all = true;
    for (const g2cf::CriterionResult& r : results) {
        std::printf("%-4s %d  %-40s %7.2f s   %s\n",
                    r.passed ? "pass" : "FAIL", r.index, r.name.c_str(),
                    r.seconds, r.detail.c_str());
        all = all && r.passed;
    }
    std::printf("%s\n", all ? "all criteria satisfied"
                            : "one or more criteria FAILED");
    return all ? 0 : 1;
}
