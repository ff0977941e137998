#include "g2coflow/errors.hpp"

namespace g2cf {

const char* to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::ok: return "ok";
        case ErrorCode::invalid_argument: return "invalid argument";
        case ErrorCode::not_positive: return "form not positive";
        case ErrorCode::no_convergence: return "no convergence";
        case ErrorCode::singular_metric: return "singular metric";
        case ErrorCode::stability_violation: return "stability violation";
        case ErrorCode::config_error: return "config error";
        case ErrorCode::io_error: return "io error";
        case ErrorCode::version_mismatch: return "version mismatch";
        case ErrorCode::checksum_mismatch: return "checksum mismatch";
        case ErrorCode::not_coclosed: return "structure not coclosed";
        case ErrorCode::insufficient_data: return "insufficient data";
        case ErrorCode::insufficient_trajectory:
            return "insufficient trajectory";
        case ErrorCode::parse_error: return "parse error";
    }
    return "unknown error";
}

}  // namespace g2cf
