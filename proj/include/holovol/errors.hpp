#pragma once

#include <stdexcept>
#include <string>

namespace holovol {

// Failure taxonomy shared by the whole library. Codes map onto process exit
// status in the CLI layer; library code throws and never exits.
enum class ErrorCode {
    invalid_input,          // precondition on an argument violated
    wrap_limit,             // droplet too thick for unambiguous phase
    degenerate_frame,       // frame content unusable (negative, flat, NaN)
    no_content,             // nothing to analyze (blank stack, empty focus)
    insufficient_data,      // too few samples/frames for the requested fit
    geometry_inconsistent,  // volume/height pair outside the cap model
    degenerate_test,        // statistical test undefined for these inputs
    contract_violation,     // internal invariant broke (always a bug)
    config_error,           // bad configuration or scene description
    io_error,               // filesystem or codec failure
    schema_error,           // file parsed but does not match the schema
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
    case ErrorCode::invalid_input:         return "invalid_input";
    case ErrorCode::wrap_limit:            return "wrap_limit";
    case ErrorCode::degenerate_frame:      return "degenerate_frame";
    case ErrorCode::no_content:            return "no_content";
    case ErrorCode::insufficient_data:     return "insufficient_data";
    case ErrorCode::geometry_inconsistent: return "geometry_inconsistent";
    case ErrorCode::degenerate_test:       return "degenerate_test";
    case ErrorCode::contract_violation:    return "contract_violation";
    case ErrorCode::config_error:          return "config_error";
    case ErrorCode::io_error:              return "io_error";
    case ErrorCode::schema_error:          return "schema_error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool ok, ErrorCode code, const std::string& message) {
    if (!ok)
        fail(code, message);
}

} // namespace holovol
