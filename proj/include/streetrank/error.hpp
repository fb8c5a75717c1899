#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace streetrank {

// Broad failure classes; the CLI maps these onto exit codes.
enum class ErrorCategory { config, data, numeric, storage };

enum class ErrorKind {
  // core
  DuplicateId,
  CoordinateOutOfRange,
  EmptyManifest,
  BadRatios,
  UnknownAttribute,
  ParseError,
  // trueskill
  NonFiniteUpdate,
  UnknownImageId,
  EmptyReferenceSet,
  // ranksvm
  DimensionMismatch,
  NonFiniteFeature,
  // net
  ShapeMismatch,
  NonFiniteGradient,
  DivergedLoss,
  // eval
  EmptyTestSet,
  MissingAttributeModel,
  MismatchedImageSets,
  // store
  StorageFailure,
  CorruptLog,
  // misc
  InvalidArgument,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case ErrorKind::EmptyManifest: return "EmptyManifest";
    case ErrorKind::BadRatios: return "BadRatios";
    case ErrorKind::UnknownAttribute: return "UnknownAttribute";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorKind::UnknownImageId: return "UnknownImageId";
    case ErrorKind::EmptyReferenceSet: return "EmptyReferenceSet";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::MissingAttributeModel: return "MissingAttributeModel";
    case ErrorKind::MismatchedImageSets: return "MismatchedImageSets";
    case ErrorKind::StorageFailure: return "StorageFailure";
    case ErrorKind::CorruptLog: return "CorruptLog";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

inline ErrorCategory category_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadRatios:
    case ErrorKind::UnknownAttribute:
    case ErrorKind::InvalidArgument:
    case ErrorKind::MissingAttributeModel:
      return ErrorCategory::config;
    case ErrorKind::NonFiniteUpdate:
    case ErrorKind::NonFiniteGradient:
    case ErrorKind::DivergedLoss:
      return ErrorCategory::numeric;
    case ErrorKind::StorageFailure:
      return ErrorCategory::storage;
    default:
      return ErrorCategory::data;
  }
}

inline std::string_view to_string(ErrorCategory cat) {
  switch (cat) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::storage: return "storage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace streetrank
