#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ssmt {

enum class Errc {
  InvalidArgument,
  EmptyInput,
  DegenerateRange,
  TooFewDistinct,
  NonFiniteValue,
  AllEmptyTask,
  OutOfGrid,
  EmptyLabelSites,
  InfeasibleSeparation,
  CorruptHeader,
  ShapeMismatch,
  VersionMismatch,
  Io,
  BadChannelCount,
  ShapeInfeasible,
  NonFiniteGradient,
  LabelOutOfRange,
  NonFiniteLogit,
  NonFiniteLoss,
  ResumeMismatch,
  SingularSystem,
  FoldTooSmall,
  ZeroVariance,
  UnknownConfigKey,
  BadConfigValue,
  MissingLabels,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ssmt
