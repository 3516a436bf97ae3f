#pragma once

#include <atomic>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "mpw/config.hpp"
#include "mpw/mpw.hpp"

namespace mpw {

/// Forwarding counters for one direction. Monotonic while the relay runs.
struct DirectionStats {
  std::atomic<std::uint64_t> frames{0};
  std::atomic<std::uint64_t> bytes{0};
};

struct RelayStats {
  DirectionStats a_to_b;
  DirectionStats b_to_a;
};

enum class RelayOutcome : std::uint8_t {
  kPeerClosed,  // one side closed; the other side was closed in turn
  kStopped,     // stopped locally (stop token or finalize)
};

/// Forwards all traffic between two disjoint paths until either side closes.
///
/// Two independent pumps run, one per direction. With equal widths every
/// channel is pumped frame by frame onto its counterpart. With different
/// widths each logical message is reassembled from the frame headers and
/// re-striped for the outgoing width. Barrier frames travel unchanged on the
/// first channel. When either side closes, both sides are closed and the
/// relay returns; an I/O failure in either direction is rethrown with the
/// channel it happened on.
RelayOutcome relay(Mpw& mpw, const Path& side_a, const Path& side_b, RelayStats& stats,
                   std::stop_token stop = {});

/// One side of a forwarder daemon.
struct ForwarderSide {
  std::string host;  // empty: accept on `ports`
  std::vector<std::uint16_t> ports;
  std::optional<std::size_t> send_buffer_bytes;
  std::optional<std::size_t> recv_buffer_bytes;
  std::optional<std::uint64_t> pace_bytes_per_sec;
  std::optional<std::int64_t> connect_timeout_ms;
  std::optional<std::int64_t> retry_backoff_ms;

  /// Channel configs in port order; handshake indices are side-local (0..n-1).
  [[nodiscard]] std::vector<ChannelConfig> channel_configs() const;
};

struct ForwarderConfig {
  ForwarderSide side_a;
  ForwarderSide side_b;
  std::optional<double> log_interval_sec;
};

/// Thrown for unreadable daemon configs; carries the 1-based line and key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, std::string key, const std::string& message);
  [[nodiscard]] std::size_t line() const noexcept { return line_; }
  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  std::size_t line_;
  std::string key_;
};

/// Parses the flat `key = value` daemon config (see docs/forwarder-config.md).
ForwarderConfig parse_forwarder_config(std::istream& in);

}  // namespace mpw
