#pragma once

#include <stdexcept>
#include <string>

namespace synref {

/// User-correctable problem: bad config value, malformed override, missing
/// dataset directory. The CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Data or file-format problem encountered while reading/writing artifacts
/// (images, checkpoints, CSVs). Also exit code 2 at the CLI.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Contract violation inside the pipeline (shape mismatch, non-finite loss).
/// Exit code 1 at the CLI.
struct RuntimeFault : std::runtime_error {
    explicit RuntimeFault(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace synref
