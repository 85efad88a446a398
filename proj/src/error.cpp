#include "s3c/error.hpp"

namespace s3c {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NumericalDivergence: return "NumericalDivergence";
    case ErrorCode::TooManyUnits: return "TooManyUnits";
    case ErrorCode::ZeroColumn: return "ZeroColumn";
    case ErrorCode::PatchTooLarge: return "PatchTooLarge";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::GridTooFine: return "GridTooFine";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::CorruptArchive: return "CorruptArchive";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

NumericalDivergence::NumericalDivergence(std::int64_t iteration,
                                         std::int64_t unit,
                                         const std::string& where)
    : Error(ErrorCode::NumericalDivergence,
            where + ": non-finite value at iteration " +
                std::to_string(iteration) + ", unit " + std::to_string(unit)),
      iteration_(iteration),
      unit_(unit) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace s3c
