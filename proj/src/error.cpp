#include "ssmt/error.hpp"

namespace ssmt {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DegenerateRange: return "DegenerateRange";
    case Errc::TooFewDistinct: return "TooFewDistinct";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::AllEmptyTask: return "AllEmptyTask";
    case Errc::OutOfGrid: return "OutOfGrid";
    case Errc::EmptyLabelSites: return "EmptyLabelSites";
    case Errc::InfeasibleSeparation: return "InfeasibleSeparation";
    case Errc::CorruptHeader: return "CorruptHeader";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::Io: return "Io";
    case Errc::BadChannelCount: return "BadChannelCount";
    case Errc::ShapeInfeasible: return "ShapeInfeasible";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::NonFiniteLogit: return "NonFiniteLogit";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::ResumeMismatch: return "ResumeMismatch";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::FoldTooSmall: return "FoldTooSmall";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::UnknownConfigKey: return "UnknownConfigKey";
    case Errc::BadConfigValue: return "BadConfigValue";
    case Errc::MissingLabels: return "MissingLabels";
  }
  return "Unknown";
}

}  // namespace ssmt
