/// @file errors.hpp
/// @brief Error taxonomy shared by the core library and the C wrapper.

#pragma once

#include <stdexcept>
#include <string>

namespace g2cf {

enum class ErrorCode : int {
    ok = 0,
    invalid_argument = 1,
    not_positive = 2,      // 3-form left the positive cone
    no_convergence = 3,    // iterative recovery failed
    singular_metric = 4,
    stability_violation = 5,  // coclosedness / positivity lost mid-run
    config_error = 6,
    io_error = 7,
    version_mismatch = 8,
    checksum_mismatch = 9,
    not_coclosed = 10,  // precondition of a coclosed-only diagnostic
    insufficient_data = 11,        // too few unflagged entries to fit
    insufficient_trajectory = 12,  // monitors need more stored steps
    parse_error = 13,              // malformed config text (line/key context)
};

const char* to_string(ErrorCode c);

/// All failures escape the core as this exception; the C layer converts the
/// code and message into its status/last-error contract.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

}  // namespace g2cf
