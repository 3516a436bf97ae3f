#include "mpw/channel.hpp"

#include <algorithm>
#include <string>
#include <thread>
#include <utility>

#include <spdlog/spdlog.h>

#include "mpw/error.hpp"
#include "mpw/tcp.hpp"

namespace mpw {

std::array<std::byte, kHelloPayloadSize> encode_hello(const Hello& hello) {
  std::array<std::byte, kHelloPayloadSize> out{};
  out[0] = std::byte{hello.protocol_version};
  store_be64(std::span<std::byte, 8>(out.data() + 1, 8), hello.channel_index);
  out[9] = static_cast<std::byte>(hello.role);
  return out;
}

Hello decode_hello(std::span<const std::byte> payload) {
  if (payload.size() != kHelloPayloadSize) {
    throw Error(Errc::kHandshakeMismatch,
                "Hello payload must be 10 bytes, got " + std::to_string(payload.size()));
  }
  Hello hello;
  hello.protocol_version = std::to_integer<std::uint8_t>(payload[0]);
  hello.channel_index = load_be64(payload.subspan<1, 8>());
  const auto role = std::to_integer<std::uint8_t>(payload[9]);
  if (role > static_cast<std::uint8_t>(Role::kAccept)) {
    throw Error(Errc::kHandshakeMismatch, "unknown role marker " + std::to_string(role));
  }
  hello.role = static_cast<Role>(role);
  return hello;
}

Hello perform_handshake(Link& link, const Hello& local) {
  const auto payload = encode_hello(local);
  link.write_all(encode_header(FrameKind::kHello, payload.size()), payload);

  HeaderBytes raw{};
  link.read_exact(raw);
  FrameHeader header;
  try {
    header = decode_header(raw);
  } catch (const Error& e) {
    throw Error(Errc::kHandshakeMismatch, std::string("bad handshake header: ") + e.what());
  }
  if (header.kind != FrameKind::kHello) {
    throw Error(Errc::kHandshakeMismatch,
                std::string("expected Hello, peer sent ") + to_string(header.kind));
  }
  std::array<std::byte, kHelloPayloadSize> body{};
  link.read_exact(body);
  const Hello remote = decode_hello(body);

  if (remote.protocol_version != local.protocol_version) {
    throw Error(Errc::kHandshakeMismatch,
                "protocol version " + std::to_string(local.protocol_version) + " vs peer " +
                    std::to_string(remote.protocol_version));
  }
  if (remote.channel_index != local.channel_index) {
    throw Error(Errc::kHandshakeMismatch,
                "channel index " + std::to_string(local.channel_index) + " vs peer " +
                    std::to_string(remote.channel_index));
  }
  if (remote.role == local.role) {
    throw Error(Errc::kHandshakeMismatch,
                std::string("both ends use role ") + to_string(local.role));
  }
  return remote;
}

Pacer::Pacer(std::uint64_t bytes_per_sec)
    : rate_(bytes_per_sec),
      slice_(static_cast<std::size_t>(std::max<std::uint64_t>(64 * 1024, bytes_per_sec / 50))),
      tokens_(static_cast<double>(slice_)),
      last_(Clock::now()) {}

void Pacer::refill(Clock::time_point now) {
  const double elapsed = std::chrono::duration<double>(now - last_).count();
  tokens_ = std::min(static_cast<double>(slice_), tokens_ + elapsed * static_cast<double>(rate_));
  last_ = now;
}

void Pacer::acquire(std::size_t n) {
  refill(Clock::now());
  const auto need = static_cast<double>(n);
  if (tokens_ < need) {
    const double wait_s = (need - tokens_) / static_cast<double>(rate_);
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
    refill(Clock::now());
  }
  tokens_ -= need;
}

const char* to_string(ChannelState state) noexcept {
  switch (state) {
    case ChannelState::kConfigured: return "Configured";
    case ChannelState::kOpen: return "Open";
    case ChannelState::kClosed: return "Closed";
  }
  return "Unknown";
}

Channel::Channel(ChannelId id, ChannelConfig config) : id_(id), config_(std::move(config)) {}

Channel::~Channel() { close(); }

void Channel::rethrow_attributed() const {
  try {
    throw;
  } catch (Error& e) {
    if (!e.channel()) e.set_channel(id_.index);
    throw;
  }
}

void Channel::open(std::stop_token stop) {
  {
    std::lock_guard lock(state_mu_);
    if (state_ == ChannelState::kOpen) {
      throw Error(Errc::kInvalidArgument, "channel " + std::to_string(id_.index) + " is already open")
          .with_channel(id_.index);
    }
  }
  try {
    config_.validate();
    const SocketOptions options{config_.send_buffer_bytes, config_.recv_buffer_bytes,
                                config_.tcp_nodelay};
    std::unique_ptr<Link> link;
    if (config_.role == Role::kAccept) {
      link = tcp_accept(config_.port, config_.connect_timeout, options, stop);
    } else {
      link = tcp_connect(config_.peer_host, config_.port, config_.connect_timeout,
                         config_.retry_backoff, options, stop);
    }
    const BufferSizes sizes = static_cast<TcpLink&>(*link).buffer_sizes();
    install(std::move(link), true);
    std::lock_guard lock(state_mu_);
    buffer_sizes_ = sizes;
  } catch (...) {
    rethrow_attributed();
  }
}

void Channel::attach(std::unique_ptr<Link> link, bool handshake) {
  {
    std::lock_guard lock(state_mu_);
    if (state_ == ChannelState::kOpen) {
      throw Error(Errc::kInvalidArgument, "channel " + std::to_string(id_.index) + " is already open")
          .with_channel(id_.index);
    }
  }
  try {
    if (config_.send_buffer_bytes || config_.recv_buffer_bytes) {
      buffer_sizes_ = link->set_buffer_sizes(config_.send_buffer_bytes, config_.recv_buffer_bytes);
    }
    install(std::move(link), handshake);
  } catch (...) {
    rethrow_attributed();
  }
}

void Channel::install(std::unique_ptr<Link> link, bool handshake) {
  if (handshake) {
    const Hello local{kWireVersion, config_.link_index.value_or(id_.index), config_.role};
    try {
      perform_handshake(*link, local);
    } catch (...) {
      link->close();
      throw;
    }
  }
  std::lock_guard lock(state_mu_);
  link_ = std::move(link);
  if (config_.pace_bytes_per_sec) {
    pacer_.emplace(*config_.pace_bytes_per_sec);
  } else {
    pacer_.reset();
  }
  state_ = ChannelState::kOpen;
}

void Channel::reconfigure(ChannelConfig config) {
  std::lock_guard lock(state_mu_);
  if (state_ == ChannelState::kOpen) {
    throw Error(Errc::kInvalidArgument, "close the channel before changing its config")
        .with_channel(id_.index);
  }
  config_ = std::move(config);
}

Link& Channel::open_link() const {
  std::lock_guard lock(state_mu_);
  if (state_ != ChannelState::kOpen) {
    throw Error(Errc::kChannelClosed,
                "channel " + std::to_string(id_.index) + " is " + to_string(state_))
        .with_channel(id_.index);
  }
  return *link_;
}

void Channel::write_frame(FrameKind kind, std::span<const std::byte> payload) {
  Link& link = open_link();
  const HeaderBytes header = encode_header(kind, payload.size());
  if (!pacer_) {
    link.write_all(header, payload);
    return;
  }
  pacer_->acquire(header.size());
  link.write_all(header);
  const std::size_t slice = pacer_->slice_bytes();
  while (!payload.empty()) {
    const std::size_t n = std::min(slice, payload.size());
    pacer_->acquire(n);
    link.write_all(payload.first(n));
    payload = payload.subspan(n);
  }
}

void Channel::send_frame(FrameKind kind, std::span<const std::byte> payload) {
  std::unique_lock lock(send_mu_, std::try_to_lock);
  if (!lock.owns_lock()) {
    throw Error(Errc::kConcurrentUse,
                "concurrent send on channel " + std::to_string(id_.index))
        .with_channel(id_.index);
  }
  try {
    write_frame(kind, payload);
  } catch (...) {
    rethrow_attributed();
  }
}

Channel::Reader::Reader(Channel& channel) : channel_(&channel), lock_(channel.recv_mu_, std::try_to_lock) {
  if (!lock_.owns_lock()) {
    throw Error(Errc::kConcurrentUse,
                "concurrent receive on channel " + std::to_string(channel.id_.index))
        .with_channel(channel.id_.index);
  }
}

Channel::Reader Channel::reader() { return Reader(*this); }

FrameHeader Channel::Reader::header() {
  try {
    HeaderBytes raw{};
    channel_->open_link().read_exact(raw);
    return decode_header(raw);
  } catch (...) {
    channel_->rethrow_attributed();
  }
}

void Channel::Reader::payload_into(std::span<std::byte> dest) {
  try {
    channel_->open_link().read_exact(dest);
  } catch (...) {
    channel_->rethrow_attributed();
  }
}

void Channel::Reader::discard(std::uint64_t n) {
  try {
    Link& link = channel_->open_link();
    std::array<std::byte, 64 * 1024> sink;
    while (n > 0) {
      const std::size_t step = static_cast<std::size_t>(std::min<std::uint64_t>(n, sink.size()));
      link.read_exact(std::span<std::byte>(sink.data(), step));
      n -= step;
    }
  } catch (...) {
    channel_->rethrow_attributed();
  }
}

Frame Channel::recv_frame(std::uint64_t max_payload) {
  Reader in = reader();
  const FrameHeader header = in.header();
  if (header.payload_len > max_payload) {
    in.discard(header.payload_len);
    throw Error(Errc::kSizeLimitExceeded, "frame of " + std::to_string(header.payload_len) +
                                              " bytes exceeds limit " +
                                              std::to_string(max_payload))
        .with_sizes(header.payload_len, max_payload)
        .with_channel(id_.index);
  }
  Frame frame{header.kind, std::vector<std::byte>(static_cast<std::size_t>(header.payload_len))};
  in.payload_into(frame.payload);
  return frame;
}

FrameHeader Channel::recv_into(std::span<std::byte> dest) {
  Reader in = reader();
  const FrameHeader header = in.header();
  if (header.payload_len > dest.size()) {
    in.discard(header.payload_len);
    throw Error(Errc::kSizeLimitExceeded, "frame of " + std::to_string(header.payload_len) +
                                              " bytes exceeds limit " +
                                              std::to_string(dest.size()))
        .with_sizes(header.payload_len, dest.size())
        .with_channel(id_.index);
  }
  in.payload_into(dest.first(static_cast<std::size_t>(header.payload_len)));
  return header;
}

void Channel::close() noexcept {
  std::unique_lock lock(state_mu_);
  if (state_ != ChannelState::kOpen) {
    state_ = ChannelState::kClosed;
    return;
  }
  state_ = ChannelState::kClosed;
  Link* link = link_.get();
  lock.unlock();

  if (send_mu_.try_lock()) {
    const HeaderBytes notice = encode_header(FrameKind::kClose, 0);
    if (!link->try_write(notice)) {
      spdlog::debug("channel {}: close notice not delivered", id_.index);
    }
    send_mu_.unlock();
  }
  link->close();
}

ChannelState Channel::state() const {
  std::lock_guard lock(state_mu_);
  return state_;
}

BufferSizes Channel::buffer_sizes() const {
  std::lock_guard lock(state_mu_);
  return buffer_sizes_;
}

std::string Channel::peer_description() const {
  std::lock_guard lock(state_mu_);
  return link_ ? link_->peer_description() : std::string("unconnected");
}

}  // namespace mpw
