#pragma once

#include <stdexcept>
#include <string>

namespace hsrnn {

// Error taxonomy shared by the whole library. The C API maps each kind to a
// status code, so every throw site picks the kind deliberately.
class Error : public std::runtime_error {
public:
    enum class Kind {
        argument,   // bad value passed by the caller
        dimension,  // tensor/shape disagreement
        format,     // malformed file or model payload
        data,       // dataset contents violate a precondition
        config,     // inconsistent model/train configuration
        state,      // operation called in the wrong order
        io,         // filesystem failure
    };

    Error(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& m) : Error(Kind::argument, m) {}
};
struct DimensionError : Error {
    explicit DimensionError(const std::string& m) : Error(Kind::dimension, m) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error(Kind::format, m) {}
};
struct DataError : Error {
    explicit DataError(const std::string& m) : Error(Kind::data, m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(Kind::config, m) {}
};
struct StateError : Error {
    explicit StateError(const std::string& m) : Error(Kind::state, m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error(Kind::io, m) {}
};

}  // namespace hsrnn
