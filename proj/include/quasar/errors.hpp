#pragma once

#include <stdexcept>
#include <string>

namespace quasar {

// error taxonomy: every throw in the library uses one of these so callers
// (and the python bindings) can tell misuse apart from bad files or data.

// matrix / tensor dimension mismatches
struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// a size limit would be exceeded (kv cache, accumulator width, ...)
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// a scalar argument is outside its documented range
struct range_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// token id outside [0, vocab_size)
struct vocab_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// malformed user input (corpus lines, prompts, ...)
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// inconsistent model configuration
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// filesystem level failure
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// file parsed but contents are not a valid artifact (magic, version,
// truncation, inconsistent shapes); message says which
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// a mathematical precondition failed at runtime (degenerate residual,
// zero latency denominator, ...)
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace quasar
