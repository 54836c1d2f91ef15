#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prefiner {

enum class ErrorCode {
  UnbalancedBrackets,
  EmptyLabel,
  TrailingGarbage,
  NoNounPhrase,
  NoVerbPhrase,
  ShapeMismatch,
  NonScalarLoss,
  MissingGrad,
  UnknownPhrase,
  EmptyPhrase,
  DimMismatch,
  ParseError,
  EmptyChain,
  EmptyCandidates,
  LengthMismatch,
  NonBinaryGroundTruth,
  EmptyQuerySet,
  Io,
  FormatVersionMismatch,
  DatasetNotFound,
  Divergence,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every failure in the library is reported through this type. what() carries
/// the human-readable detail; code() is stable and machine-checkable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace prefiner
