#pragma once

#include <stdexcept>
#include <string>

namespace spectrum {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint cannot be opened or a tensor cannot be loaded.
struct CheckpointError : Error {
    using Error::Error;
};

// A scan report file is missing, unparseable, or structurally wrong.
struct ReportError : Error {
    using Error::Error;
};

// An include/exclude pattern failed to compile.
struct PatternError : Error {
    using Error::Error;
};

// A caller-supplied parameter is out of its documented range.
struct UsageError : Error {
    using Error::Error;
};

} // namespace spectrum
