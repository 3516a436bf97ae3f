#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mpw {

enum class Errc : std::uint8_t {
  kInvalidArgument,
  kInvalidConfig,
  // Frame decoding.
  kVersionMismatch,
  kUnknownKind,
  kLengthOverCap,
  kTruncated,
  kMalformedFrame,
  // Channel setup.
  kConnectTimeout,
  kHandshakeMismatch,
  kAddressInUse,
  kCancelled,
  // Channel I/O.
  kChannelClosed,
  kIoFailure,
  kSizeLimitExceeded,
  kConcurrentUse,
  kProtocolError,
  // Collective operations.
  kStripeMismatch,
  kInitFailed,
  kFinalized,
  kOverlappingPaths,
  kArityMismatch,
  kInvalidPath,
  // Statistics and benchmarking.
  kInsufficientSamples,
  kPlanMismatch,
};

std::string_view to_string(Errc code) noexcept;

/// Failure of one channel inside a collective operation.
struct ChannelFailure {
  std::size_t channel;
  Errc code;
  std::string message;
};

/// The single exception type thrown by the library.
///
/// Besides the code, an error may carry the channel it is attributed to,
/// the actual/limit sizes for size violations, and for collective operations
/// the full list of per-channel failures (in path order).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  [[nodiscard]] Errc code() const noexcept { return code_; }
  [[nodiscard]] const std::optional<std::size_t>& channel() const noexcept { return channel_; }
  [[nodiscard]] std::uint64_t actual() const noexcept { return actual_; }
  [[nodiscard]] std::uint64_t limit() const noexcept { return limit_; }
  [[nodiscard]] const std::vector<ChannelFailure>& failures() const noexcept { return failures_; }

  void set_channel(std::size_t channel) noexcept { channel_ = channel; }

  Error&& with_channel(std::size_t channel) &&;
  Error&& with_sizes(std::uint64_t actual, std::uint64_t limit) &&;
  Error&& with_failures(std::vector<ChannelFailure> failures) &&;

 private:
  Errc code_;
  std::optional<std::size_t> channel_;
  std::uint64_t actual_ = 0;
  std::uint64_t limit_ = 0;
  std::vector<ChannelFailure> failures_;
};

}  // namespace mpw
