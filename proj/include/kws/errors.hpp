#pragma once

#include <stdexcept>
#include <string>

namespace kws {

// Error taxonomy maps 1:1 onto process exit codes (see tools/kws_main.cpp):
//   config_error -> 2, format_error -> 3, degenerate_input_error -> 4.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad parameters: invalid options, empty banks, infeasible configs.
struct config_error : error {
    using error::error;
};

// Malformed or unsupported file contents.
struct format_error : error {
    using error::error;
};

// Structurally valid input the algorithms cannot operate on
// (zero-norm rows, silent audio, sequences shorter than one window).
struct degenerate_input_error : error {
    using error::error;
};

}  // namespace kws
