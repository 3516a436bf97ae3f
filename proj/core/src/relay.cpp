#include "mpw/relay.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <string>
#include <utility>

#include <spdlog/spdlog.h>

#include "mpw/error.hpp"
#include "mpw/parallel.hpp"
#include "mpw/stripe.hpp"

namespace mpw {

namespace {

// Signals a clean end of one pump: the input side closed.
struct InputClosed {};

std::vector<Channel*> open_channels(Mpw& mpw, const Path& path) {
  if (mpw.finalized()) throw Error(Errc::kFinalized, "instance has been finalized");
  std::vector<Channel*> out;
  for (ChannelId id : path) {
    Channel& ch = mpw.channel(id);
    if (ch.state() != ChannelState::kOpen) {
      throw Error(Errc::kChannelClosed, "channel " + std::to_string(id.index) + " is not open")
          .with_channel(id.index);
    }
    out.push_back(&ch);
  }
  return out;
}

FrameHeader read_forwardable(Channel::Reader& in, std::size_t channel) {
  const FrameHeader header = in.header();
  if (header.kind == FrameKind::kClose) throw InputClosed{};
  if (header.kind == FrameKind::kHello) {
    throw Error(Errc::kProtocolError, "unexpected Hello during relay").with_channel(channel);
  }
  return header;
}

// Equal widths: channel `in` feeds channel `out` frame by frame.
void pump_channel(Channel& in, Channel& out, DirectionStats& stats) {
  std::vector<std::byte> buffer;
  for (;;) {
    FrameHeader header;
    {
      auto reader = in.reader();
      header = read_forwardable(reader, in.id().index);
      buffer.resize(static_cast<std::size_t>(header.payload_len));
      reader.payload_into(buffer);
    }
    out.send_frame(header.kind, buffer);
    stats.frames.fetch_add(1, std::memory_order_relaxed);
    stats.bytes.fetch_add(header.payload_len, std::memory_order_relaxed);
  }
}

// Different widths: reassemble each logical message, then re-stripe it.
void pump_messages(const std::vector<Channel*>& in, const std::vector<Channel*>& out,
                   DirectionStats& stats) {
  std::vector<std::byte> message;
  std::vector<std::uint64_t> lens(in.size());
  std::vector<std::uint64_t> offsets(in.size());
  for (;;) {
    {
      std::vector<Channel::Reader> readers;
      readers.reserve(in.size());
      readers.push_back(in[0]->reader());
      const FrameHeader first = read_forwardable(readers[0], in[0]->id().index);
      if (first.kind == FrameKind::kBarrier) {
        readers.clear();
        out[0]->send_frame(FrameKind::kBarrier, {});
        stats.frames.fetch_add(1, std::memory_order_relaxed);
        continue;
      }
      lens[0] = first.payload_len;
      // Each stream carries its header ahead of its payload, so collecting
      // headers one channel at a time cannot deadlock the sender.
      for (std::size_t i = 1; i < in.size(); ++i) {
        readers.push_back(in[i]->reader());
        const FrameHeader header = read_forwardable(readers[i], in[i]->id().index);
        if (header.kind != FrameKind::kData) {
          throw Error(Errc::kProtocolError, "stray Barrier inside a striped message")
              .with_channel(in[i]->id().index);
        }
        lens[i] = header.payload_len;
      }
      std::exclusive_scan(lens.begin(), lens.end(), offsets.begin(), std::uint64_t{0});
      message.resize(static_cast<std::size_t>(offsets.back() + lens.back()));

      std::vector<ChannelTask> tasks;
      for (std::size_t i = 0; i < in.size(); ++i) {
        std::span<std::byte> dest(message.data() + offsets[i], static_cast<std::size_t>(lens[i]));
        Channel::Reader* reader = &readers[i];
        tasks.push_back({in[i]->id().index, [reader, dest] { reader->payload_into(dest); }});
      }
      raise_collective("relay receive", tasks, run_concurrently(tasks));
    }

    const StripeLayout layout = stripe_layout(message.size(), out.size());
    std::vector<ChannelTask> tasks;
    for (std::size_t j = 0; j < out.size(); ++j) {
      Channel* ch = out[j];
      std::span<const std::byte> part(message.data() + layout.chunks[j].offset,
                                      static_cast<std::size_t>(layout.chunks[j].len));
      tasks.push_back({ch->id().index, [ch, part] { ch->send_frame(FrameKind::kData, part); }});
    }
    raise_collective("relay send", tasks, run_concurrently(tasks));
    stats.frames.fetch_add(out.size(), std::memory_order_relaxed);
    stats.bytes.fetch_add(message.size(), std::memory_order_relaxed);
  }
}

bool is_closed_error(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const Error& e) {
    if (e.code() == Errc::kChannelClosed) return true;
    return std::all_of(e.failures().begin(), e.failures().end(),
                       [](const ChannelFailure& f) { return f.code == Errc::kChannelClosed; }) &&
           !e.failures().empty();
  } catch (...) {
    return false;
  }
}

}  // namespace

RelayOutcome relay(Mpw& mpw, const Path& side_a, const Path& side_b, RelayStats& stats,
                   std::stop_token stop) {
  if (side_a.intersects(side_b)) {
    throw Error(Errc::kOverlappingPaths, "relay sides must not share channels");
  }
  const auto a = open_channels(mpw, side_a);
  const auto b = open_channels(mpw, side_b);

  std::mutex shutdown_mu;
  bool shut = false;
  auto shutdown_all = [&] {
    std::lock_guard lock(shutdown_mu);
    if (shut) return;
    shut = true;
    for (Channel* ch : a) ch->close();
    for (Channel* ch : b) ch->close();
  };
  std::atomic<bool> stopped{false};
  std::stop_callback on_stop(stop, [&] {
    stopped = true;
    shutdown_all();
  });

  // Each task ends cleanly when its input closes (or the relay is being torn
  // down) and shuts both sides so the opposite pump unblocks too.
  auto guarded = [&](auto body) {
    return [&, body] {
      try {
        body();
      } catch (const InputClosed&) {
        shutdown_all();
        return;
      } catch (...) {
        const auto error = std::current_exception();
        shutdown_all();
        if (is_closed_error(error)) return;
        std::rethrow_exception(error);
      }
    };
  };

  std::vector<ChannelTask> tasks;
  if (a.size() == b.size()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      Channel* from_a = a[i];
      Channel* to_b = b[i];
      tasks.push_back({from_a->id().index,
                       guarded([from_a, to_b, &stats] { pump_channel(*from_a, *to_b, stats.a_to_b); })});
      tasks.push_back({to_b->id().index,
                       guarded([from_a, to_b, &stats] { pump_channel(*to_b, *from_a, stats.b_to_a); })});
    }
  } else {
    tasks.push_back({a.front()->id().index,
                     guarded([&a, &b, &stats] { pump_messages(a, b, stats.a_to_b); })});
    tasks.push_back({b.front()->id().index,
                     guarded([&a, &b, &stats] { pump_messages(b, a, stats.b_to_a); })});
  }
  const auto errors = run_concurrently(tasks);
  shutdown_all();
  if (stopped.load()) return RelayOutcome::kStopped;
  raise_collective("relay", tasks, errors);
  return RelayOutcome::kPeerClosed;
}

}  // namespace mpw
