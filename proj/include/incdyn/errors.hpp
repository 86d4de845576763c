#pragma once

#include <stdexcept>
#include <string>

namespace incdyn {

/// Invalid configuration or arguments. CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or missing input data. CLI exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameter estimation failed. CLI exit code 3.
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Age outside the range covered by an AgeProfile.
class AgeRangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

} // namespace incdyn
