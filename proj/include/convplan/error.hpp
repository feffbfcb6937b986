#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace convplan {

enum class ErrorCode {
  kInvalidArgument,
  kConfigError,
  kIoError,
  // core
  kLengthOutOfRange,
  kEmptyInput,
  // gateway
  kProviderUnavailable,
  kAuthError,
  kTimeout,
  kCacheMiss,
  // forge
  kMalformedGeneration,
  kPrefixError,
  // rewriters / planner
  kRewriteFailed,
  kEmptyOutput,
  kPlanGenerationFailed,
  kNoJsonFound,
  kSchemaError,
  // metrics
  kSizeLimitExceeded,
  kEmptyPlan,
  kEmptyText,
  kDimensionMismatch,
  // preference
  kSameRewriter,
  kUnparseableVerdict,
  kMixedPresentation,
  kIncompletePairSet,
  kNoOverlap,
  // dpo
  kDanglingReference,
  kEmptyPairs,
  kValidationRejected,
  // annotation
  kUnknownAnnotator,
  kUnknownTask,
  kDuplicateLabel,
  kNotAssigned,
  // pipeline
  kMissingStage,
  kHashMismatch,
};

std::string_view error_code_name(ErrorCode code);

/// Single exception type for the library. `cause()` is set when an error wraps
/// a lower-level failure (e.g. RewriteFailed caused by a gateway Timeout).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<ErrorCode> cause = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<ErrorCode> cause() const noexcept { return cause_; }

 private:
  ErrorCode code_;
  std::optional<ErrorCode> cause_;
};

}  // namespace convplan
