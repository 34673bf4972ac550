#pragma once

#include <stdexcept>
#include <string>

namespace automiseg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define AUTOMISEG_DEFINE_ERROR(Name)          \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

AUTOMISEG_DEFINE_ERROR(InvalidArgument);
AUTOMISEG_DEFINE_ERROR(DecodeError);
AUTOMISEG_DEFINE_ERROR(IoError);
AUTOMISEG_DEFINE_ERROR(MissingAsset);
AUTOMISEG_DEFINE_ERROR(MissingBackgroundClass);
AUTOMISEG_DEFINE_ERROR(DimensionMismatch);
AUTOMISEG_DEFINE_ERROR(OutOfBounds);
AUTOMISEG_DEFINE_ERROR(EmptyBox);
AUTOMISEG_DEFINE_ERROR(EmptySpace);
AUTOMISEG_DEFINE_ERROR(NoTrials);
AUTOMISEG_DEFINE_ERROR(NonFiniteObjective);
AUTOMISEG_DEFINE_ERROR(MissingTruth);

// Backend failures.
AUTOMISEG_DEFINE_ERROR(NoDetection);
AUTOMISEG_DEFINE_ERROR(BackendUnavailable);
AUTOMISEG_DEFINE_ERROR(ProtocolError);

#undef AUTOMISEG_DEFINE_ERROR

/// A configuration value failed validation; carries the offending parameter name.
class InvalidConfig : public Error {
 public:
  InvalidConfig(std::string param, const std::string& what)
      : Error("invalid config: " + param + ": " + what), param_(std::move(param)) {}

  const std::string& param() const noexcept { return param_; }

 private:
  std::string param_;
};

}  // namespace automiseg
