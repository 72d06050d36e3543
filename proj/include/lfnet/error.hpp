#pragma once

#include <stdexcept>
#include <string>

namespace lfnet {

/// Base class for all engine errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor or parameter shape disagreement (channel mismatch, bad dims, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid graph structure: cycles, nodes off every input->output path,
/// unknown node ids, trace/model mismatches.
class GraphError : public Error {
public:
    using Error::Error;
};

/// Malformed external file (NetPBM image or model container).
class FormatError : public Error {
public:
    enum class Kind {
        bad_magic,
        bad_version,
        bad_header,
        unsupported_maxval,
        truncated,
        trailing_data,
    };

    FormatError(Kind kind, const std::string& what) : Error(what), kind(kind) {}

    Kind kind;
};

/// Invalid run or training configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training aborted (e.g. non-finite loss).
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure (missing path, short read/write).
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace lfnet
