#include "prefiner/error.hpp"

namespace prefiner {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnbalancedBrackets: return "UnbalancedBrackets";
    case ErrorCode::EmptyLabel: return "EmptyLabel";
    case ErrorCode::TrailingGarbage: return "TrailingGarbage";
    case ErrorCode::NoNounPhrase: return "NoNounPhrase";
    case ErrorCode::NoVerbPhrase: return "NoVerbPhrase";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::MissingGrad: return "MissingGrad";
    case ErrorCode::UnknownPhrase: return "UnknownPhrase";
    case ErrorCode::EmptyPhrase: return "EmptyPhrase";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyChain: return "EmptyChain";
    case ErrorCode::EmptyCandidates: return "EmptyCandidates";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonBinaryGroundTruth: return "NonBinaryGroundTruth";
    case ErrorCode::EmptyQuerySet: return "EmptyQuerySet";
    case ErrorCode::Io: return "Io";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::DatasetNotFound: return "DatasetNotFound";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace prefiner
