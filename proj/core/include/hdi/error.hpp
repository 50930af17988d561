#pragma once

#include <stdexcept>
#include <string>

namespace hdi {

// Error categories. The CLI maps them onto exit codes: numeric failures exit
// with 2, everything else with 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class StateError : public Error { public: using Error::Error; };
class ParameterError : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class OrderingError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class VersionError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class ReportError : public Error { public: using Error::Error; };
class TrainingError : public NumericError { public: using NumericError::NumericError; };

}  // namespace hdi
