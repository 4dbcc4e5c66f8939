#include "prune_ast/error.hpp"

namespace prune_ast {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::shape_mismatch: return "shape_mismatch";
        case Errc::out_of_range: return "out_of_range";
        case Errc::invalid_argument: return "invalid_argument";
        case Errc::wav_malformed_header: return "wav_malformed_header";
        case Errc::wav_unsupported_codec: return "wav_unsupported_codec";
        case Errc::wav_empty_payload: return "wav_empty_payload";
        case Errc::bad_sample_rate: return "bad_sample_rate";
        case Errc::input_too_short: return "input_too_short";
        case Errc::bad_magic: return "bad_magic";
        case Errc::version_mismatch: return "version_mismatch";
        case Errc::truncated: return "truncated";
        case Errc::trailing_bytes: return "trailing_bytes";
        case Errc::duplicate_entry: return "duplicate_entry";
        case Errc::missing_entry: return "missing_entry";
        case Errc::insufficient_data: return "insufficient_data";
        case Errc::undefined_value: return "undefined_value";
        case Errc::io_failure: return "io_failure";
        case Errc::parse_error: return "parse_error";
        case Errc::config: return "config";
        case Errc::numerical: return "numerical";
    }
    return "unknown";
}

int exit_code_for(Errc code) noexcept {
    switch (code) {
        case Errc::io_failure:
        case Errc::parse_error:
        case Errc::wav_malformed_header:
        case Errc::wav_unsupported_codec:
        case Errc::wav_empty_payload:
        case Errc::bad_magic:
        case Errc::version_mismatch:
        case Errc::truncated:
        case Errc::trailing_bytes:
        case Errc::duplicate_entry:
            return 2;
        case Errc::numerical:
        case Errc::undefined_value:
            return 3;
        default:
            return 1;
    }
}

}  // namespace prune_ast
