#include "mpw/error.hpp"

#include <utility>

namespace mpw {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kVersionMismatch: return "VersionMismatch";
    case Errc::kUnknownKind: return "UnknownKind";
    case Errc::kLengthOverCap: return "LengthOverCap";
    case Errc::kTruncated: return "Truncated";
    case Errc::kMalformedFrame: return "MalformedFrame";
    case Errc::kConnectTimeout: return "ConnectTimeout";
    case Errc::kHandshakeMismatch: return "HandshakeMismatch";
    case Errc::kAddressInUse: return "AddressInUse";
    case Errc::kCancelled: return "Cancelled";
    case Errc::kChannelClosed: return "ChannelClosed";
    case Errc::kIoFailure: return "IoFailure";
    case Errc::kSizeLimitExceeded: return "SizeLimitExceeded";
    case Errc::kConcurrentUse: return "ConcurrentUse";
    case Errc::kProtocolError: return "ProtocolError";
    case Errc::kStripeMismatch: return "StripeMismatch";
    case Errc::kInitFailed: return "InitFailed";
    case Errc::kFinalized: return "Finalized";
    case Errc::kOverlappingPaths: return "OverlappingPaths";
    case Errc::kArityMismatch: return "ArityMismatch";
    case Errc::kInvalidPath: return "InvalidPath";
    case Errc::kInsufficientSamples: return "InsufficientSamples";
    case Errc::kPlanMismatch: return "PlanMismatch";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

Error&& Error::with_channel(std::size_t channel) && {
  channel_ = channel;
  return std::move(*this);
}

Error&& Error::with_sizes(std::uint64_t actual, std::uint64_t limit) && {
  actual_ = actual;
  limit_ = limit;
  return std::move(*this);
}

Error&& Error::with_failures(std::vector<ChannelFailure> failures) && {
  failures_ = std::move(failures);
  return std::move(*this);
}

}  // namespace mpw
