#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stop_token>
#include <vector>

#include "mpw/channel.hpp"
#include "mpw/config.hpp"
#include "mpw/link.hpp"

namespace mpw {

/// Receive storage for dsend_recv that keeps its allocation between calls.
/// Capacity never grows beyond the largest max_recv it was used with.
class RecvCache {
 public:
  [[nodiscard]] std::span<const std::byte> view() const noexcept {
    return {buffer_.data(), size_};
  }
  [[nodiscard]] std::size_t capacity() const noexcept { return buffer_.capacity(); }

 private:
  friend class Mpw;
  std::span<std::byte> prepare(std::size_t n);

  std::vector<std::byte> buffer_;
  std::size_t size_ = 0;
};

/// A library instance: a table of channels plus the path-level message
/// passing operations.
///
/// Every collective runs one worker per involved channel and joins them before
/// returning. Different threads may drive the same instance only on disjoint
/// channel sets.
class Mpw {
 public:
  /// Opens all channels concurrently and returns once every one is Open. The
  /// first failure cancels the rest, closes whatever opened, and throws
  /// kInitFailed naming the failing channel.
  static Mpw init(std::vector<ChannelConfig> configs, std::stop_token stop = {});

  /// Builds an instance over pre-connected links (test kit, socketpairs).
  /// `base` supplies role, pacing and buffer settings for every channel; the
  /// handshake uses each link's position as its index.
  static Mpw from_links(std::vector<std::unique_ptr<Link>> links, const ChannelConfig& base,
                        bool handshake = true);

  Mpw(Mpw&& other) noexcept;
  Mpw& operator=(Mpw&&) = delete;
  ~Mpw();

  /// Closes every channel. Idempotent; later operations throw kFinalized.
  void finalize() noexcept;
  [[nodiscard]] bool finalized() const noexcept { return finalized_.load(); }

  [[nodiscard]] std::size_t size() const noexcept { return channels_.size(); }
  Channel& channel(ChannelId id);

  /// Two rounds of Barrier frames on the first channel of the path: returns
  /// once the peer's barrier reached us and ours is known to have reached it.
  void barrier(const Path& path);

  /// Stripes `buf` evenly over the path, one Data frame per channel.
  void send(std::span<const std::byte> buf, const Path& path);
  /// Receives a message of known size striped over the path; every chunk must
  /// match the locally computed layout (kStripeMismatch otherwise).
  std::vector<std::byte> recv(std::size_t expected_len, const Path& path);
  void recv_into(std::span<std::byte> out, const Path& path);

  /// Full-duplex striped exchange.
  std::vector<std::byte> send_recv(std::span<const std::byte> send_buf, std::size_t recv_len,
                                   const Path& path);
  void send_recv_into(std::span<const std::byte> send_buf, std::span<std::byte> out,
                      const Path& path);

  /// Striped send on one path concurrently with a striped receive on another.
  std::vector<std::byte> cycle(std::span<const std::byte> send_buf, const Path& send_path,
                               std::size_t recv_len, const Path& recv_path);

  /// Exchange where the receiver does not know the incoming size; chunk sizes
  /// come from the frame headers. Throws kSizeLimitExceeded when the incoming
  /// total exceeds max_recv (the frames are drained first). The returned view
  /// lives in `cache` until its next use.
  std::span<const std::byte> dsend_recv(std::span<const std::byte> send_buf,
                                        std::uint64_t max_recv, const Path& path,
                                        RecvCache& cache);
  std::vector<std::byte> dsend_recv(std::span<const std::byte> send_buf, std::uint64_t max_recv,
                                    const Path& path);

  // Per-channel variants: buffer i travels whole on path[i].
  void p_send(std::span<const std::span<const std::byte>> bufs, const Path& path);
  std::vector<std::vector<std::byte>> p_recv(std::span<const std::size_t> lens, const Path& path);
  std::vector<std::vector<std::byte>> p_send_recv(std::span<const std::span<const std::byte>> bufs,
                                                  std::span<const std::size_t> recv_lens,
                                                  const Path& path);

  /// Closes channel `id` and opens it again with `config`. The peer must do
  /// the matching reopen.
  void reopen_channel(ChannelId id, ChannelConfig config, std::stop_token stop = {});

 private:
  Mpw() = default;
  void ensure_ready() const;
  std::vector<Channel*> resolve(const Path& path);

  std::vector<std::unique_ptr<Channel>> channels_;
  std::atomic<bool> finalized_{false};
};

}  // namespace mpw
