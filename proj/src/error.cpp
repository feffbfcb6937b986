#include "convplan/error.hpp"

namespace convplan {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kLengthOutOfRange: return "LengthOutOfRange";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::kAuthError: return "AuthError";
    case ErrorCode::kTimeout: return "TimeoutError";
    case ErrorCode::kCacheMiss: return "CacheMiss";
    case ErrorCode::kMalformedGeneration: return "MalformedGeneration";
    case ErrorCode::kPrefixError: return "PrefixError";
    case ErrorCode::kRewriteFailed: return "RewriteFailed";
    case ErrorCode::kEmptyOutput: return "EmptyOutput";
    case ErrorCode::kPlanGenerationFailed: return "PlanGenerationFailed";
    case ErrorCode::kNoJsonFound: return "NoJsonFound";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kSizeLimitExceeded: return "SizeLimitExceeded";
    case ErrorCode::kEmptyPlan: return "EmptyPlan";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kSameRewriter: return "SameRewriter";
    case ErrorCode::kUnparseableVerdict: return "UnparseableVerdict";
    case ErrorCode::kMixedPresentation: return "MixedPresentation";
    case ErrorCode::kIncompletePairSet: return "IncompletePairSet";
    case ErrorCode::kNoOverlap: return "NoOverlap";
    case ErrorCode::kDanglingReference: return "DanglingReference";
    case ErrorCode::kEmptyPairs: return "EmptyPairs";
    case ErrorCode::kValidationRejected: return "ValidationRejected";
    case ErrorCode::kUnknownAnnotator: return "UnknownAnnotator";
    case ErrorCode::kUnknownTask: return "UnknownTask";
    case ErrorCode::kDuplicateLabel: return "DuplicateLabel";
    case ErrorCode::kNotAssigned: return "NotAssigned";
    case ErrorCode::kMissingStage: return "MissingStage";
    case ErrorCode::kHashMismatch: return "HashMismatch";
  }
  return "Unknown";
}

namespace {

std::string format_message(ErrorCode code, const std::string& message,
                           std::optional<ErrorCode> cause) {
  std::string out(error_code_name(code));
  if (cause) {
    out += "(";
    out += error_code_name(*cause);
    out += ")";
  }
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<ErrorCode> cause)
    : std::runtime_error(format_message(code, message, cause)),
      code_(code),
      cause_(cause) {}

}  // namespace convplan
