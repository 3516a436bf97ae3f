#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mpw {

/// Requested vs. granted socket buffer sizes; the OS may clamp or round.
struct BufferSizes {
  std::optional<std::size_t> requested_send;
  std::optional<std::size_t> requested_recv;
  std::size_t granted_send = 0;
  std::size_t granted_recv = 0;
};

/// A reliable, ordered, full-duplex byte stream.
///
/// write_all transfers every byte or throws; read_exact fills the whole span
/// or throws. After close(), every operation throws Error(kChannelClosed),
/// and a read blocked on another thread is woken with the same error. One
/// writer and one reader may use a link concurrently.
class Link {
 public:
  virtual ~Link() = default;

  virtual void write_all(std::span<const std::byte> bytes) = 0;
  /// Gather write of a header and body; implementations may coalesce.
  virtual void write_all(std::span<const std::byte> head, std::span<const std::byte> body);
  /// Best-effort write that never blocks; returns false if any byte could not
  /// be written immediately.
  virtual bool try_write(std::span<const std::byte> bytes) noexcept = 0;
  virtual void read_exact(std::span<std::byte> out) = 0;
  virtual void close() noexcept = 0;
  virtual BufferSizes set_buffer_sizes(std::optional<std::size_t> send,
                                       std::optional<std::size_t> recv) = 0;
  [[nodiscard]] virtual std::string peer_description() const = 0;

  std::vector<std::byte> read_exact(std::size_t n);
};

}  // namespace mpw
