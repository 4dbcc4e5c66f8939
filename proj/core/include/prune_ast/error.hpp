#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prune_ast {

enum class Errc {
    shape_mismatch,
    out_of_range,
    invalid_argument,
    // wav input
    wav_malformed_header,
    wav_unsupported_codec,
    wav_empty_payload,
    // frontend
    bad_sample_rate,
    input_too_short,
    // weight container
    bad_magic,
    version_mismatch,
    truncated,
    trailing_bytes,
    duplicate_entry,
    missing_entry,
    // analysis
    insufficient_data,
    undefined_value,
    // infrastructure
    io_failure,
    parse_error,
    config,
    numerical,
};

std::string_view errc_name(Errc code) noexcept;

/// Process exit status for an error class: 1 usage/config, 2 I/O, 3 numerical.
int exit_code_for(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace prune_ast
