#pragma once

#include <stdexcept>
#include <string>

namespace uca {

/// Base of every error raised by the library. `kind()` is a stable short
/// identifier used in logs and CLI messages.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define UCA_DEFINE_ERROR(Name)                                             \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(#Name, what) {}         \
  };

UCA_DEFINE_ERROR(IoError)
UCA_DEFINE_ERROR(FormatError)
UCA_DEFINE_ERROR(ShapeMismatch)
UCA_DEFINE_ERROR(ShapeError)
UCA_DEFINE_ERROR(DegeneratePose)
UCA_DEFINE_ERROR(CropTooLarge)
UCA_DEFINE_ERROR(EmptySchedule)
UCA_DEFINE_ERROR(LayerNotExposed)
UCA_DEFINE_ERROR(VictimUnavailable)
UCA_DEFINE_ERROR(PreconditionError)
UCA_DEFINE_ERROR(VersionError)
UCA_DEFINE_ERROR(MissingFile)
UCA_DEFINE_ERROR(EmptyPitchClass)
UCA_DEFINE_ERROR(NonFiniteLoss)
UCA_DEFINE_ERROR(EmptyText)
UCA_DEFINE_ERROR(JudgeUnavailable)
UCA_DEFINE_ERROR(ParseError)
UCA_DEFINE_ERROR(ConfigError)

#undef UCA_DEFINE_ERROR

}  // namespace uca
