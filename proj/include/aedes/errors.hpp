#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace aedes {

// Base for every error the library raises. Callers that only need a
// message catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class InputError : public Error { using Error::Error; };

// Model artifact errors.
class FormatError : public Error { using Error::Error; };
class VersionError : public Error { using Error::Error; };
class CorruptionError : public Error { using Error::Error; };

// Training aborted on a non-finite loss.
class TrainingAborted : public Error { using Error::Error; };

using WarningSink = std::function<void(const std::string&)>;

/// Routes a non-fatal diagnostic to the installed sink (stderr by default).
void warn(const std::string& message);

/// Installs a new sink and returns the previous one. Thread-safe.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace aedes
