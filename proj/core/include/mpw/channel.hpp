#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stop_token>
#include <string>

#include "mpw/config.hpp"
#include "mpw/link.hpp"
#include "mpw/wire.hpp"

namespace mpw {

/// Handshake payload exchanged right after a channel's link comes up.
struct Hello {
  std::uint8_t protocol_version = kWireVersion;
  std::uint64_t channel_index = 0;
  Role role = Role::kConnect;

  friend bool operator==(const Hello&, const Hello&) = default;
};

std::array<std::byte, kHelloPayloadSize> encode_hello(const Hello& hello);
/// Throws Error(kHandshakeMismatch) on an unknown role marker.
Hello decode_hello(std::span<const std::byte> payload);

/// Sends `local` as a Hello frame, reads the peer's, and checks that versions
/// and indices agree and roles differ. Throws Error(kHandshakeMismatch).
Hello perform_handshake(Link& link, const Hello& local);

/// Token bucket for send pacing. The bucket holds one slice, so writes go out
/// in slices of at most max(64 KiB, rate / 50) bytes.
class Pacer {
 public:
  using Clock = std::chrono::steady_clock;

  explicit Pacer(std::uint64_t bytes_per_sec);

  [[nodiscard]] std::uint64_t rate() const noexcept { return rate_; }
  [[nodiscard]] std::size_t slice_bytes() const noexcept { return slice_; }

  /// Blocks until `n` (<= slice_bytes) tokens are available and takes them.
  void acquire(std::size_t n);

 private:
  void refill(Clock::time_point now);

  std::uint64_t rate_;
  std::size_t slice_;
  double tokens_;
  Clock::time_point last_;
};

enum class ChannelState : std::uint8_t { kConfigured, kOpen, kClosed };

const char* to_string(ChannelState state) noexcept;

/// One stream endpoint: configuration, link, lifecycle and framing.
///
/// Full duplex: one send and one receive may be in flight at the same time.
/// A second concurrent send (or receive) is rejected with kConcurrentUse.
/// State moves Configured -> Open -> Closed, and Closed -> Open on reopen.
class Channel {
 public:
  Channel(ChannelId id, ChannelConfig config);
  ~Channel();

  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  /// Establishes the TCP link per the config, then handshakes.
  void open(std::stop_token stop = {});
  /// Adopts an already-connected link (e.g. from the test kit) and handshakes.
  void attach(std::unique_ptr<Link> link, bool handshake = true);
  /// Replaces the config; only valid while not Open.
  void reconfigure(ChannelConfig config);

  void send_frame(FrameKind kind, std::span<const std::byte> payload);
  /// Reads one frame. A payload above `max_payload` is drained so the stream
  /// stays aligned, then kSizeLimitExceeded is thrown.
  Frame recv_frame(std::uint64_t max_payload);
  /// Reads one frame straight into `dest`; the payload may not exceed
  /// dest.size() (same draining rule). Returns the header.
  FrameHeader recv_into(std::span<std::byte> dest);

  /// Sends a best-effort Close frame when Open, tears the link down and moves
  /// to Closed. Idempotent; never throws.
  void close() noexcept;

  /// Exclusive, incremental access to the receive side: read a header, then
  /// decide what to do with its payload.
  class Reader {
   public:
    FrameHeader header();
    void payload_into(std::span<std::byte> dest);
    void discard(std::uint64_t n);

   private:
    friend class Channel;
    explicit Reader(Channel& channel);
    Channel* channel_;
    std::unique_lock<std::mutex> lock_;
  };
  Reader reader();

  [[nodiscard]] ChannelId id() const noexcept { return id_; }
  [[nodiscard]] const ChannelConfig& config() const noexcept { return config_; }
  [[nodiscard]] ChannelState state() const;
  [[nodiscard]] BufferSizes buffer_sizes() const;
  [[nodiscard]] std::string peer_description() const;

 private:
  Link& open_link() const;
  void install(std::unique_ptr<Link> link, bool handshake);
  void write_frame(FrameKind kind, std::span<const std::byte> payload);
  [[noreturn]] void rethrow_attributed() const;

  ChannelId id_;
  ChannelConfig config_;
  std::unique_ptr<Link> link_;
  std::optional<Pacer> pacer_;
  BufferSizes buffer_sizes_;
  ChannelState state_ = ChannelState::kConfigured;
  mutable std::mutex state_mu_;
  std::mutex send_mu_;
  std::mutex recv_mu_;
};

}  // namespace mpw
