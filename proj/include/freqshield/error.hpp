#pragma once

#include <stdexcept>
#include <string>

namespace freqshield {

// Base of every error raised by the toolkit. The kind string is stable and
// used by the CLI to pick exit codes and by tests to match error classes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define FREQSHIELD_DEFINE_ERROR(Name, Kind)                        \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(Kind, what) {}  \
  };

FREQSHIELD_DEFINE_ERROR(LoadError, "load error")
FREQSHIELD_DEFINE_ERROR(ValidationError, "validation error")
FREQSHIELD_DEFINE_ERROR(ParameterError, "parameter error")
FREQSHIELD_DEFINE_ERROR(SplitError, "split error")
FREQSHIELD_DEFINE_ERROR(NumericError, "numeric error")
FREQSHIELD_DEFINE_ERROR(StateError, "state error")
FREQSHIELD_DEFINE_ERROR(ConfigurationError, "configuration error")
FREQSHIELD_DEFINE_ERROR(FormatError, "format error")
FREQSHIELD_DEFINE_ERROR(ShapeError, "shape error")
FREQSHIELD_DEFINE_ERROR(CompositionError, "composition error")
FREQSHIELD_DEFINE_ERROR(DegenerateInputError, "degenerate input")
FREQSHIELD_DEFINE_ERROR(AssemblyError, "assembly error")
FREQSHIELD_DEFINE_ERROR(IoError, "io error")
FREQSHIELD_DEFINE_ERROR(MissingArtifactError, "missing artifact")
FREQSHIELD_DEFINE_ERROR(AttackError, "attack error")

#undef FREQSHIELD_DEFINE_ERROR

// Non-finite loss during optimization; carries the (1-based) epoch it happened in.
class TrainingError : public Error {
 public:
  TrainingError(int epoch, const std::string& what)
      : Error("training error", "epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace freqshield
