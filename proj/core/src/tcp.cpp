#include "mpw/tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <string>
#include <thread>
#include <utility>

#include "mpw/error.hpp"

namespace mpw {

namespace {

using Clock = std::chrono::steady_clock;

// Granularity at which blocking setup calls re-check their stop token.
constexpr std::chrono::milliseconds kPollSlice{50};

std::string errno_text(int err) { return std::strerror(err); }

void set_nonblocking(int fd, bool on) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, on ? (flags | O_NONBLOCK) : (flags & ~O_NONBLOCK));
}

std::size_t get_int_opt(int fd, int opt) {
  int value = 0;
  socklen_t len = sizeof(value);
  ::getsockopt(fd, SOL_SOCKET, opt, &value, &len);
  return static_cast<std::size_t>(value);
}

BufferSizes apply_buffer_sizes(int fd, std::optional<std::size_t> send,
                               std::optional<std::size_t> recv) {
  BufferSizes sizes;
  sizes.requested_send = send;
  sizes.requested_recv = recv;
  if (send) {
    const int value = static_cast<int>(std::min<std::size_t>(*send, INT32_MAX));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &value, sizeof(value));
  }
  if (recv) {
    const int value = static_cast<int>(std::min<std::size_t>(*recv, INT32_MAX));
    ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &value, sizeof(value));
  }
  sizes.granted_send = get_int_opt(fd, SO_SNDBUF);
  sizes.granted_recv = get_int_opt(fd, SO_RCVBUF);
  return sizes;
}

void apply_nodelay(int fd, bool on) {
  const int value = on ? 1 : 0;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &value, sizeof(value));
}

std::string describe(const sockaddr* addr) {
  char host[NI_MAXHOST] = {};
  char serv[NI_MAXSERV] = {};
  const socklen_t len =
      addr->sa_family == AF_INET6 ? sizeof(sockaddr_in6) : sizeof(sockaddr_in);
  if (::getnameinfo(addr, len, host, sizeof(host), serv, sizeof(serv),
                    NI_NUMERICHOST | NI_NUMERICSERV) != 0) {
    return "tcp:?";
  }
  return std::string("tcp:") + host + ":" + serv;
}

// Waits for `events` on fd until the deadline or a stop request.
// Returns true when ready, false on timeout.
bool wait_ready(int fd, short events, Clock::time_point deadline, const std::stop_token& stop) {
  for (;;) {
    if (stop.stop_requested()) throw Error(Errc::kCancelled, "channel setup cancelled");
    const auto now = Clock::now();
    if (now >= deadline) return false;
    const auto slice = std::min<Clock::duration>(deadline - now, kPollSlice);
    pollfd pfd{fd, events, 0};
    const int timeout_ms = static_cast<int>(
        std::max<long long>(1, std::chrono::ceil<std::chrono::milliseconds>(slice).count()));
    const int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc > 0) return true;
    if (rc < 0 && errno != EINTR) {
      throw Error(Errc::kIoFailure, "poll: " + errno_text(errno));
    }
  }
}

void sleep_until_or_stop(Clock::time_point until, const std::stop_token& stop) {
  while (Clock::now() < until) {
    if (stop.stop_requested()) throw Error(Errc::kCancelled, "channel setup cancelled");
    std::this_thread::sleep_for(std::min<Clock::duration>(until - Clock::now(), kPollSlice));
  }
}

// A connect to an unused local port in the ephemeral range can pick that same
// port as its source and end up talking to itself.
bool connected_to_self(int fd) {
  sockaddr_storage local{};
  sockaddr_storage remote{};
  socklen_t local_len = sizeof(local);
  socklen_t remote_len = sizeof(remote);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&local), &local_len) != 0 ||
      ::getpeername(fd, reinterpret_cast<sockaddr*>(&remote), &remote_len) != 0) {
    return false;
  }
  const auto here = describe(reinterpret_cast<const sockaddr*>(&local));
  return here != "tcp:?" && here == describe(reinterpret_cast<const sockaddr*>(&remote));
}

// One connect attempt against every resolved address. Returns an invalid fd
// on failure.
UniqueFd try_connect_once(const addrinfo* list, const SocketOptions& options,
                          Clock::time_point deadline, const std::stop_token& stop,
                          BufferSizes& sizes, std::string& peer, std::string& last_error) {
  for (const addrinfo* ai = list; ai != nullptr; ai = ai->ai_next) {
    UniqueFd fd(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!fd.valid()) {
      last_error = "socket: " + errno_text(errno);
      continue;
    }
    sizes = apply_buffer_sizes(fd.get(), options.send_buffer_bytes, options.recv_buffer_bytes);
    apply_nodelay(fd.get(), options.tcp_nodelay);
    set_nonblocking(fd.get(), true);
    int rc = ::connect(fd.get(), ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno != EINPROGRESS) {
      last_error = "connect: " + errno_text(errno);
      continue;
    }
    if (rc != 0) {
      if (!wait_ready(fd.get(), POLLOUT, deadline, stop)) {
        last_error = "connect: timed out";
        continue;
      }
      int err = 0;
      socklen_t len = sizeof(err);
      ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
      if (err != 0) {
        last_error = "connect: " + errno_text(err);
        continue;
      }
    }
    if (connected_to_self(fd.get())) {
      last_error = "connect: socket connected to itself";
      continue;
    }
    set_nonblocking(fd.get(), false);
    peer = describe(ai->ai_addr);
    return fd;
  }
  return UniqueFd{};
}

}  // namespace

UniqueFd& UniqueFd::operator=(UniqueFd&& other) noexcept {
  if (this != &other) reset(other.release());
  return *this;
}

int UniqueFd::release() noexcept { return std::exchange(fd_, -1); }

void UniqueFd::reset(int fd) noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

void Link::write_all(std::span<const std::byte> head, std::span<const std::byte> body) {
  write_all(head);
  write_all(body);
}

std::vector<std::byte> Link::read_exact(std::size_t n) {
  std::vector<std::byte> out(n);
  read_exact(std::span<std::byte>(out));
  return out;
}

TcpLink::TcpLink(UniqueFd fd, std::string peer, BufferSizes sizes)
    : fd_(std::move(fd)), peer_(std::move(peer)), sizes_(std::move(sizes)) {}

void TcpLink::fail(const char* op, int err) const {
  if (closed_.load(std::memory_order_acquire)) {
    throw Error(Errc::kChannelClosed, std::string(op) + " on closed link " + peer_);
  }
  throw Error(Errc::kIoFailure, std::string(op) + " " + peer_ + ": " + errno_text(err));
}

void TcpLink::write_all(std::span<const std::byte> bytes) {
  if (closed_.load(std::memory_order_acquire)) fail("write", EBADF);
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd_.get(), bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("write", errno);
    }
    bytes = bytes.subspan(static_cast<std::size_t>(n));
  }
}

void TcpLink::write_all(std::span<const std::byte> head, std::span<const std::byte> body) {
  if (closed_.load(std::memory_order_acquire)) fail("write", EBADF);
  iovec iov[2];
  while (!head.empty()) {
    iov[0] = {const_cast<std::byte*>(head.data()), head.size()};
    iov[1] = {const_cast<std::byte*>(body.data()), body.size()};
    msghdr msg{};
    msg.msg_iov = iov;
    msg.msg_iovlen = body.empty() ? 1 : 2;
    const ssize_t n = ::sendmsg(fd_.get(), &msg, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("write", errno);
    }
    auto sent = static_cast<std::size_t>(n);
    const std::size_t from_head = std::min(sent, head.size());
    head = head.subspan(from_head);
    body = body.subspan(sent - from_head);
  }
  write_all(body);
}

bool TcpLink::try_write(std::span<const std::byte> bytes) noexcept {
  if (closed_.load(std::memory_order_acquire)) return false;
  const ssize_t n = ::send(fd_.get(), bytes.data(), bytes.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
  return n == static_cast<ssize_t>(bytes.size());
}

void TcpLink::read_exact(std::span<std::byte> out) {
  if (closed_.load(std::memory_order_acquire)) fail("read", EBADF);
  while (!out.empty()) {
    const ssize_t n = ::recv(fd_.get(), out.data(), out.size(), 0);
    if (n == 0) {
      throw Error(Errc::kChannelClosed, "peer " + peer_ + " closed the connection");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("read", errno);
    }
    out = out.subspan(static_cast<std::size_t>(n));
  }
}

void TcpLink::close() noexcept {
  if (!closed_.exchange(true, std::memory_order_acq_rel)) {
    // shutdown wakes readers blocked on this socket; the descriptor itself is
    // released with the link so no other thread can observe a reused fd.
    ::shutdown(fd_.get(), SHUT_RDWR);
  }
}

BufferSizes TcpLink::set_buffer_sizes(std::optional<std::size_t> send,
                                      std::optional<std::size_t> recv) {
  sizes_ = apply_buffer_sizes(fd_.get(), send, recv);
  return sizes_;
}

std::unique_ptr<TcpLink> tcp_connect(const std::string& host, std::uint16_t port,
                                     std::chrono::milliseconds timeout,
                                     std::chrono::milliseconds backoff,
                                     const SocketOptions& options, std::stop_token stop) {
  const auto deadline = Clock::now() + timeout;
  const std::string service = std::to_string(port);
  std::string last_error = "no attempt made";
  for (;;) {
    if (stop.stop_requested()) throw Error(Errc::kCancelled, "channel setup cancelled");
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* list = nullptr;
    const int gai = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &list);
    if (gai != 0) {
      last_error = std::string("resolve: ") + ::gai_strerror(gai);
    } else {
      std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(list, &::freeaddrinfo);
      BufferSizes sizes;
      std::string peer;
      UniqueFd fd = try_connect_once(list, options, deadline, stop, sizes, peer, last_error);
      if (fd.valid()) return std::make_unique<TcpLink>(std::move(fd), peer, sizes);
    }
    const auto now = Clock::now();
    if (now >= deadline) break;
    sleep_until_or_stop(std::min(deadline, now + backoff), stop);
    if (Clock::now() >= deadline) break;
  }
  throw Error(Errc::kConnectTimeout, "connect to " + host + ":" + service + " gave up after " +
                                         std::to_string(timeout.count()) + " ms (" + last_error +
                                         ")");
}

std::unique_ptr<TcpLink> tcp_accept(std::uint16_t port, std::chrono::milliseconds timeout,
                                    const SocketOptions& options, std::stop_token stop) {
  const auto deadline = Clock::now() + timeout;
  // Dual-stack listener where IPv6 exists, plain IPv4 otherwise.
  UniqueFd listener(::socket(AF_INET6, SOCK_STREAM | SOCK_CLOEXEC, 0));
  bool v6 = listener.valid();
  if (!v6) listener.reset(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!listener.valid()) throw Error(Errc::kIoFailure, "socket: " + errno_text(errno));

  const int one = 1;
  ::setsockopt(listener.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  // Accepted sockets inherit buffer sizes; the receive window scale is fixed
  // at SYN time, so this must precede listen().
  apply_buffer_sizes(listener.get(), options.send_buffer_bytes, options.recv_buffer_bytes);

  int rc = 0;
  if (v6) {
    const int zero = 0;
    ::setsockopt(listener.get(), IPPROTO_IPV6, IPV6_V6ONLY, &zero, sizeof(zero));
    sockaddr_in6 addr{};
    addr.sin6_family = AF_INET6;
    addr.sin6_addr = in6addr_any;
    addr.sin6_port = htons(port);
    rc = ::bind(listener.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
  } else {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(port);
    rc = ::bind(listener.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
  }
  if (rc != 0) {
    if (errno == EADDRINUSE) {
      throw Error(Errc::kAddressInUse, "port " + std::to_string(port) + " is already in use");
    }
    throw Error(Errc::kIoFailure, "bind port " + std::to_string(port) + ": " + errno_text(errno));
  }
  if (::listen(listener.get(), 1) != 0) {
    throw Error(Errc::kIoFailure, "listen: " + errno_text(errno));
  }

  if (!wait_ready(listener.get(), POLLIN, deadline, stop)) {
    throw Error(Errc::kConnectTimeout, "no peer connected to port " + std::to_string(port) +
                                           " within " + std::to_string(timeout.count()) + " ms");
  }
  sockaddr_storage peer_addr{};
  socklen_t peer_len = sizeof(peer_addr);
  UniqueFd fd(::accept4(listener.get(), reinterpret_cast<sockaddr*>(&peer_addr), &peer_len,
                        SOCK_CLOEXEC));
  if (!fd.valid()) throw Error(Errc::kIoFailure, "accept: " + errno_text(errno));
  const BufferSizes sizes =
      apply_buffer_sizes(fd.get(), options.send_buffer_bytes, options.recv_buffer_bytes);
  apply_nodelay(fd.get(), options.tcp_nodelay);
  return std::make_unique<TcpLink>(std::move(fd), describe(reinterpret_cast<sockaddr*>(&peer_addr)),
                                   sizes);
}

}  // namespace mpw
