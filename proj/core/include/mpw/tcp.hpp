#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>

#include "mpw/link.hpp"

namespace mpw {

/// Owning file descriptor.
class UniqueFd {
 public:
  UniqueFd() noexcept = default;
  explicit UniqueFd(int fd) noexcept : fd_(fd) {}
  UniqueFd(UniqueFd&& other) noexcept : fd_(other.release()) {}
  UniqueFd& operator=(UniqueFd&& other) noexcept;
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  [[nodiscard]] int get() const noexcept { return fd_; }
  [[nodiscard]] bool valid() const noexcept { return fd_ >= 0; }
  int release() noexcept;
  void reset(int fd = -1) noexcept;

 private:
  int fd_ = -1;
};

struct SocketOptions {
  std::optional<std::size_t> send_buffer_bytes;
  std::optional<std::size_t> recv_buffer_bytes;
  bool tcp_nodelay = true;
};

/// Link over a connected TCP socket.
class TcpLink final : public Link {
 public:
  TcpLink(UniqueFd fd, std::string peer, BufferSizes sizes);

  void write_all(std::span<const std::byte> bytes) override;
  void write_all(std::span<const std::byte> head, std::span<const std::byte> body) override;
  bool try_write(std::span<const std::byte> bytes) noexcept override;
  void read_exact(std::span<std::byte> out) override;
  void close() noexcept override;
  BufferSizes set_buffer_sizes(std::optional<std::size_t> send,
                               std::optional<std::size_t> recv) override;
  [[nodiscard]] std::string peer_description() const override { return peer_; }

  [[nodiscard]] const BufferSizes& buffer_sizes() const noexcept { return sizes_; }

 private:
  [[noreturn]] void fail(const char* op, int err) const;

  UniqueFd fd_;
  std::string peer_;
  BufferSizes sizes_;
  std::atomic<bool> closed_{false};
};

/// Dials host:port, retrying with a fixed backoff until `timeout` elapses.
/// Buffer sizes are applied before connecting.
/// Throws kConnectTimeout, or kCancelled when `stop` is requested.
std::unique_ptr<TcpLink> tcp_connect(const std::string& host, std::uint16_t port,
                                     std::chrono::milliseconds timeout,
                                     std::chrono::milliseconds backoff,
                                     const SocketOptions& options, std::stop_token stop = {});

/// Listens on `port` (all interfaces) and accepts exactly one connection;
/// the listener is closed afterwards.
/// Throws kAddressInUse, kConnectTimeout, or kCancelled.
std::unique_ptr<TcpLink> tcp_accept(std::uint16_t port, std::chrono::milliseconds timeout,
                                    const SocketOptions& options, std::stop_token stop = {});

}  // namespace mpw
