#include "mpw/mpw.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <utility>

#include <spdlog/spdlog.h>

#include "mpw/error.hpp"
#include "mpw/parallel.hpp"
#include "mpw/stripe.hpp"

namespace mpw {

namespace {

template <class T>
std::span<T> chunk_of(std::span<T> buf, const Chunk& chunk) {
  return buf.subspan(static_cast<std::size_t>(chunk.offset), static_cast<std::size_t>(chunk.len));
}

// Rejects anything but a Data frame; Close means the peer went away.
void expect_kind(Channel::Reader& in, const FrameHeader& header, FrameKind want,
                 std::size_t channel) {
  if (header.kind == want) return;
  if (header.kind == FrameKind::kClose) {
    throw Error(Errc::kChannelClosed, "peer closed channel " + std::to_string(channel))
        .with_channel(channel);
  }
  in.discard(header.payload_len);
  throw Error(Errc::kProtocolError, std::string("expected ") + to_string(want) + " frame, got " +
                                        to_string(header.kind))
      .with_channel(channel);
}

// Receives one Data frame whose payload must be exactly dest.size() bytes.
void receive_exact(Channel& ch, std::span<std::byte> dest) {
  auto in = ch.reader();
  const FrameHeader header = in.header();
  expect_kind(in, header, FrameKind::kData, ch.id().index);
  if (header.payload_len != dest.size()) {
    in.discard(header.payload_len);
    throw Error(Errc::kStripeMismatch, "channel " + std::to_string(ch.id().index) + " expected " +
                                           std::to_string(dest.size()) + " bytes, peer sent " +
                                           std::to_string(header.payload_len))
        .with_sizes(header.payload_len, dest.size())
        .with_channel(ch.id().index);
  }
  in.payload_into(dest);
}

void run_tasks(std::string_view op, std::vector<ChannelTask>& tasks) {
  const auto errors = run_concurrently(tasks);
  raise_collective(op, tasks, errors);
}

void add_striped_sends(std::vector<ChannelTask>& tasks, const std::vector<Channel*>& channels,
                       std::span<const std::byte> buf) {
  const StripeLayout layout = stripe_layout(buf.size(), channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) {
    Channel* ch = channels[i];
    const auto part = chunk_of(buf, layout.chunks[i]);
    tasks.push_back({ch->id().index, [ch, part] { ch->send_frame(FrameKind::kData, part); }});
  }
}

void add_striped_recvs(std::vector<ChannelTask>& tasks, const std::vector<Channel*>& channels,
                       std::span<std::byte> out) {
  const StripeLayout layout = stripe_layout(out.size(), channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) {
    Channel* ch = channels[i];
    const auto part = chunk_of(out, layout.chunks[i]);
    tasks.push_back({ch->id().index, [ch, part] { receive_exact(*ch, part); }});
  }
}

void check_arity(std::size_t buffers, const Path& path) {
  if (buffers != path.width()) {
    throw Error(Errc::kArityMismatch, std::to_string(buffers) + " buffers for " +
                                          std::to_string(path.width()) + " channels");
  }
}

}  // namespace

std::span<std::byte> RecvCache::prepare(std::size_t n) {
  if (buffer_.size() < n) {
    // reserve() allocates exactly n, unlike resize()'s geometric growth.
    buffer_.reserve(n);
    buffer_.resize(n);
  }
  size_ = n;
  return {buffer_.data(), n};
}

Mpw Mpw::init(std::vector<ChannelConfig> configs, std::stop_token stop) {
  if (configs.empty()) throw Error(Errc::kInvalidConfig, "init needs at least one channel");
  for (std::size_t i = 0; i < configs.size(); ++i) {
    try {
      configs[i].validate();
    } catch (Error& e) {
      e.set_channel(i);
      throw;
    }
  }

  Mpw mpw;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    mpw.channels_.push_back(std::make_unique<Channel>(ChannelId{i}, std::move(configs[i])));
  }

  std::stop_source cancel;
  std::stop_callback forward(stop, [&cancel] { cancel.request_stop(); });
  std::mutex first_mu;
  std::optional<std::size_t> first_failure;

  std::vector<ChannelTask> tasks;
  for (auto& ch : mpw.channels_) {
    Channel* c = ch.get();
    tasks.push_back({c->id().index, [&, c] {
                       try {
                         c->open(cancel.get_token());
                       } catch (const Error& e) {
                         if (e.code() != Errc::kCancelled) {
                           std::lock_guard lock(first_mu);
                           if (!first_failure) first_failure = c->id().index;
                         }
                         cancel.request_stop();
                         throw;
                       }
                     }});
  }
  const auto errors = run_concurrently(tasks);
  if (std::none_of(errors.begin(), errors.end(), [](const auto& e) { return bool(e); })) {
    return mpw;
  }

  for (auto& ch : mpw.channels_) ch->close();
  mpw.finalized_ = true;
  if (!first_failure) throw Error(Errc::kCancelled, "init cancelled");
  const std::size_t k = *first_failure;
  std::string cause = "unknown";
  Errc cause_code = Errc::kIoFailure;
  try {
    std::rethrow_exception(errors[k]);
  } catch (const Error& e) {
    cause = e.what();
    cause_code = e.code();
  } catch (const std::exception& e) {
    cause = e.what();
  }
  throw Error(Errc::kInitFailed, "channel " + std::to_string(k) + ": " + cause)
      .with_channel(k)
      .with_failures({{k, cause_code, cause}});
}

Mpw Mpw::from_links(std::vector<std::unique_ptr<Link>> links, const ChannelConfig& base,
                    bool handshake) {
  if (links.empty()) throw Error(Errc::kInvalidConfig, "need at least one link");
  Mpw mpw;
  std::vector<ChannelTask> tasks;
  for (std::size_t i = 0; i < links.size(); ++i) {
    ChannelConfig config = base;
    config.link_index.reset();
    mpw.channels_.push_back(std::make_unique<Channel>(ChannelId{i}, std::move(config)));
    Channel* c = mpw.channels_.back().get();
    Link* raw = links[i].release();
    tasks.push_back({i, [c, raw, handshake] { c->attach(std::unique_ptr<Link>(raw), handshake); }});
  }
  run_tasks("from_links", tasks);
  return mpw;
}

Mpw::Mpw(Mpw&& other) noexcept
    : channels_(std::move(other.channels_)), finalized_(other.finalized_.load()) {
  other.finalized_ = true;
}

Mpw::~Mpw() { finalize(); }

void Mpw::finalize() noexcept {
  if (finalized_.exchange(true)) return;
  for (auto& ch : channels_) ch->close();
}

void Mpw::ensure_ready() const {
  if (finalized_.load()) throw Error(Errc::kFinalized, "instance has been finalized");
}

Channel& Mpw::channel(ChannelId id) {
  if (id.index >= channels_.size()) {
    throw Error(Errc::kInvalidPath, "no channel " + std::to_string(id.index));
  }
  return *channels_[id.index];
}

std::vector<Channel*> Mpw::resolve(const Path& path) {
  ensure_ready();
  std::vector<Channel*> out;
  out.reserve(path.width());
  for (ChannelId id : path) {
    Channel& ch = channel(id);
    if (ch.state() != ChannelState::kOpen) {
      throw Error(Errc::kChannelClosed, "channel " + std::to_string(id.index) + " is not open")
          .with_channel(id.index);
    }
    out.push_back(&ch);
  }
  return out;
}

void Mpw::barrier(const Path& path) {
  Channel& ch = *resolve(path).front();
  auto await_barrier = [&ch] {
    auto in = ch.reader();
    const FrameHeader header = in.header();
    expect_kind(in, header, FrameKind::kBarrier, ch.id().index);
  };
  ch.send_frame(FrameKind::kBarrier, {});
  await_barrier();
  ch.send_frame(FrameKind::kBarrier, {});
  await_barrier();
}

void Mpw::send(std::span<const std::byte> buf, const Path& path) {
  const auto channels = resolve(path);
  std::vector<ChannelTask> tasks;
  add_striped_sends(tasks, channels, buf);
  run_tasks("send", tasks);
}

std::vector<std::byte> Mpw::recv(std::size_t expected_len, const Path& path) {
  std::vector<std::byte> out(expected_len);
  recv_into(out, path);
  return out;
}

void Mpw::recv_into(std::span<std::byte> out, const Path& path) {
  const auto channels = resolve(path);
  std::vector<ChannelTask> tasks;
  add_striped_recvs(tasks, channels, out);
  run_tasks("recv", tasks);
}

std::vector<std::byte> Mpw::send_recv(std::span<const std::byte> send_buf, std::size_t recv_len,
                                      const Path& path) {
  std::vector<std::byte> out(recv_len);
  send_recv_into(send_buf, out, path);
  return out;
}

void Mpw::send_recv_into(std::span<const std::byte> send_buf, std::span<std::byte> out,
                         const Path& path) {
  const auto channels = resolve(path);
  std::vector<ChannelTask> tasks;
  add_striped_sends(tasks, channels, send_buf);
  add_striped_recvs(tasks, channels, out);
  run_tasks("send_recv", tasks);
}

std::vector<std::byte> Mpw::cycle(std::span<const std::byte> send_buf, const Path& send_path,
                                  std::size_t recv_len, const Path& recv_path) {
  if (send_path.intersects(recv_path)) {
    throw Error(Errc::kOverlappingPaths, "cycle needs disjoint send and receive paths");
  }
  const auto senders = resolve(send_path);
  const auto receivers = resolve(recv_path);
  std::vector<std::byte> out(recv_len);
  std::vector<ChannelTask> tasks;
  add_striped_sends(tasks, senders, send_buf);
  add_striped_recvs(tasks, receivers, out);
  run_tasks("cycle", tasks);
  return out;
}

std::span<const std::byte> Mpw::dsend_recv(std::span<const std::byte> send_buf,
                                           std::uint64_t max_recv, const Path& path,
                                           RecvCache& cache) {
  const auto channels = resolve(path);
  const std::size_t width = channels.size();

  std::vector<std::uint64_t> lens(width, 0);
  std::vector<std::uint64_t> offsets(width, 0);
  std::uint64_t total = 0;
  std::atomic<bool> aborted{false};
  bool exceeded = false;
  std::span<std::byte> dest;

  // Every receiver reads its header, then all meet here; the completion step
  // sees every chunk length before any payload is stored.
  auto plan = [&]() noexcept {
    if (aborted) return;
    total = std::accumulate(lens.begin(), lens.end(), std::uint64_t{0});
    if (total > max_recv) {
      exceeded = true;
      return;
    }
    std::exclusive_scan(lens.begin(), lens.end(), offsets.begin(), std::uint64_t{0});
    try {
      dest = cache.prepare(static_cast<std::size_t>(total));
    } catch (...) {
      aborted = true;
    }
  };
  std::barrier sync(static_cast<std::ptrdiff_t>(width), plan);

  std::vector<ChannelTask> tasks;
  add_striped_sends(tasks, channels, send_buf);
  for (std::size_t i = 0; i < width; ++i) {
    Channel* ch = channels[i];
    tasks.push_back({ch->id().index, [&, ch, i] {
                       std::optional<Channel::Reader> in;
                       try {
                         in.emplace(ch->reader());
                         const FrameHeader header = in->header();
                         expect_kind(*in, header, FrameKind::kData, ch->id().index);
                         lens[i] = header.payload_len;
                       } catch (...) {
                         aborted = true;
                         sync.arrive_and_drop();
                         throw;
                       }
                       sync.arrive_and_wait();
                       if (aborted || exceeded) {
                         in->discard(lens[i]);
                         return;
                       }
                       in->payload_into(dest.subspan(static_cast<std::size_t>(offsets[i]),
                                                    static_cast<std::size_t>(lens[i])));
                     }});
  }
  const auto errors = run_concurrently(tasks);
  raise_collective("dsend_recv", tasks, errors);
  if (exceeded) {
    throw Error(Errc::kSizeLimitExceeded, "incoming message of " + std::to_string(total) +
                                              " bytes exceeds limit " + std::to_string(max_recv))
        .with_sizes(total, max_recv);
  }
  if (aborted) throw Error(Errc::kIoFailure, "dsend_recv: could not allocate receive buffer");
  return cache.view();
}

std::vector<std::byte> Mpw::dsend_recv(std::span<const std::byte> send_buf, std::uint64_t max_recv,
                                       const Path& path) {
  RecvCache cache;
  const auto view = dsend_recv(send_buf, max_recv, path, cache);
  return {view.begin(), view.end()};
}

void Mpw::p_send(std::span<const std::span<const std::byte>> bufs, const Path& path) {
  check_arity(bufs.size(), path);
  const auto channels = resolve(path);
  std::vector<ChannelTask> tasks;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    Channel* ch = channels[i];
    const auto buf = bufs[i];
    tasks.push_back({ch->id().index, [ch, buf] { ch->send_frame(FrameKind::kData, buf); }});
  }
  run_tasks("p_send", tasks);
}

std::vector<std::vector<std::byte>> Mpw::p_recv(std::span<const std::size_t> lens,
                                                const Path& path) {
  check_arity(lens.size(), path);
  const auto channels = resolve(path);
  std::vector<std::vector<std::byte>> out(channels.size());
  std::vector<ChannelTask> tasks;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    out[i].resize(lens[i]);
    Channel* ch = channels[i];
    std::span<std::byte> slot(out[i]);
    tasks.push_back({ch->id().index, [ch, slot] { receive_exact(*ch, slot); }});
  }
  run_tasks("p_recv", tasks);
  return out;
}

std::vector<std::vector<std::byte>> Mpw::p_send_recv(
    std::span<const std::span<const std::byte>> bufs, std::span<const std::size_t> recv_lens,
    const Path& path) {
  check_arity(bufs.size(), path);
  check_arity(recv_lens.size(), path);
  const auto channels = resolve(path);
  std::vector<std::vector<std::byte>> out(channels.size());
  std::vector<ChannelTask> tasks;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    Channel* ch = channels[i];
    const auto buf = bufs[i];
    tasks.push_back({ch->id().index, [ch, buf] { ch->send_frame(FrameKind::kData, buf); }});
  }
  for (std::size_t i = 0; i < channels.size(); ++i) {
    out[i].resize(recv_lens[i]);
    Channel* ch = channels[i];
    std::span<std::byte> slot(out[i]);
    tasks.push_back({ch->id().index, [ch, slot] { receive_exact(*ch, slot); }});
  }
  run_tasks("p_send_recv", tasks);
  return out;
}

void Mpw::reopen_channel(ChannelId id, ChannelConfig config, std::stop_token stop) {
  ensure_ready();
  Channel& ch = channel(id);
  ch.close();
  ch.reconfigure(std::move(config));
  ch.open(std::move(stop));
  spdlog::debug("channel {} reopened to {}", id.index, ch.peer_description());
}

}  // namespace mpw
