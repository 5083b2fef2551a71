#pragma once

#include <stdexcept>
#include <string>

namespace ovainn {

// Shape or size disagreement between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration value (zero epochs, zero scale, bad class order, ...).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// An operation that needs at least one sample got none.
struct EmptyDatasetError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed or truncated file contents. Messages carry the byte offset.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Registry already holds an expert for this class id.
struct ConflictError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Referenced class id is not registered.
struct LookupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation requires state the object does not have (e.g. empty registry).
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Failure talking to the filesystem.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ovainn
