#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

namespace mpw {

enum class Role : std::uint8_t { kConnect = 0, kAccept = 1 };

const char* to_string(Role role) noexcept;

/// Configuration of one stream endpoint.
///
/// A Connect channel dials `peer_host:port`; an Accept channel listens on
/// `port` on all interfaces and must leave `peer_host` empty.
struct ChannelConfig {
  std::string peer_host;
  std::uint16_t port = 0;
  Role role = Role::kConnect;
  std::optional<std::size_t> send_buffer_bytes;
  std::optional<std::size_t> recv_buffer_bytes;
  /// Absent means unpaced.
  std::optional<std::uint64_t> pace_bytes_per_sec;
  std::chrono::milliseconds connect_timeout{30'000};
  std::chrono::milliseconds retry_backoff{250};
  bool tcp_nodelay = true;
  /// Index announced in the handshake. Defaults to the local channel id;
  /// override when the two peers number their channels differently.
  std::optional<std::uint64_t> link_index;

  static ChannelConfig connect(std::string host, std::uint16_t port);
  static ChannelConfig accept(std::uint16_t port);

  /// Throws Error(kInvalidConfig) naming the offending field.
  void validate() const;
};

/// Dense index of a channel inside one library instance, assigned in
/// declaration order at init.
struct ChannelId {
  std::size_t index = 0;

  friend auto operator<=>(const ChannelId&, const ChannelId&) = default;
};

/// Ordered, duplicate-free, non-empty set of channels used as one logical link.
class Path {
 public:
  /// Throws Error(kInvalidPath) on an empty list or duplicate ids.
  explicit Path(std::vector<ChannelId> channels);
  Path(std::initializer_list<std::size_t> indices);

  /// Channels [first, first + count).
  static Path range(std::size_t first, std::size_t count);

  [[nodiscard]] std::size_t width() const noexcept { return channels_.size(); }
  [[nodiscard]] const std::vector<ChannelId>& channels() const noexcept { return channels_; }
  [[nodiscard]] ChannelId operator[](std::size_t i) const { return channels_[i]; }
  [[nodiscard]] auto begin() const noexcept { return channels_.begin(); }
  [[nodiscard]] auto end() const noexcept { return channels_.end(); }

  [[nodiscard]] bool intersects(const Path& other) const noexcept;

 private:
  std::vector<ChannelId> channels_;
};

}  // namespace mpw
