#include "mpw/testkit.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <string>
#include <thread>

#include "mpw/error.hpp"

namespace mpw::testkit {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kSegmentBytes = 64 * 1024;

struct Segment {
  Clock::time_point deliver_at;
  std::vector<std::byte> data;
  std::size_t pos = 0;
};

// One direction of the pair.
struct Wire {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Segment> queue;
  Clock::time_point free_at{};
  std::uint64_t offset = 0;
  std::size_t next_stall = 0;
  bool writer_closed = false;  // reader drains, then sees end of stream
  bool reader_closed = false;  // reading end gone; writes fail
};

struct PairState {
  ImpairmentProfile profile;
  Clock::duration latency{};
  std::atomic<std::uint64_t> sent{0};
  std::atomic<bool> disconnected{false};
  Wire wires[2];

  void disconnect() {
    disconnected = true;
    for (Wire& w : wires) {
      std::lock_guard lock(w.mu);
      w.cv.notify_all();
    }
  }
};

std::atomic<std::uint64_t> g_pair_counter{0};

class ImpairedLink final : public Link {
 public:
  ImpairedLink(std::shared_ptr<PairState> state, int side, std::uint64_t pair_id)
      : state_(std::move(state)),
        out_(state_->wires[side]),
        in_(state_->wires[1 - side]),
        name_("testkit:" + std::to_string(pair_id) + (side == 0 ? "/a" : "/b")) {}

  ~ImpairedLink() override { close(); }

  void write_all(std::span<const std::byte> bytes) override {
    std::uint64_t allowed = bytes.size();
    bool trips = false;
    if (state_->profile.disconnect_after_bytes) {
      const std::uint64_t cap = *state_->profile.disconnect_after_bytes;
      const std::uint64_t before = state_->sent.fetch_add(bytes.size());
      const std::uint64_t room = before >= cap ? 0 : cap - before;
      if (bytes.size() >= room) {
        allowed = room;
        trips = true;
      }
    }
    {
      std::lock_guard lock(out_.mu);
      check_writable();
      enqueue(bytes.first(static_cast<std::size_t>(allowed)));
    }
    out_.cv.notify_all();
    if (trips) {
      state_->disconnect();
      throw Error(Errc::kChannelClosed, name_ + " disconnected after byte threshold");
    }
  }

  bool try_write(std::span<const std::byte> bytes) noexcept override {
    try {
      write_all(bytes);
      return true;
    } catch (...) {
      return false;
    }
  }

  void read_exact(std::span<std::byte> out) override {
    std::unique_lock lock(in_.mu);
    while (!out.empty()) {
      if (closed_.load() || state_->disconnected.load()) {
        throw Error(Errc::kChannelClosed, name_ + " is closed");
      }
      if (in_.queue.empty()) {
        if (in_.writer_closed) throw Error(Errc::kChannelClosed, name_ + ": peer closed");
        in_.cv.wait(lock);
        continue;
      }
      Segment& head = in_.queue.front();
      if (Clock::now() < head.deliver_at) {
        in_.cv.wait_until(lock, head.deliver_at);
        continue;
      }
      const std::size_t n = std::min(out.size(), head.data.size() - head.pos);
      std::copy_n(head.data.begin() + static_cast<std::ptrdiff_t>(head.pos), n, out.begin());
      head.pos += n;
      out = out.subspan(n);
      if (head.pos == head.data.size()) in_.queue.pop_front();
    }
  }

  void close() noexcept override {
    if (closed_.exchange(true)) return;
    {
      std::lock_guard lock(out_.mu);
      out_.writer_closed = true;
    }
    out_.cv.notify_all();
    {
      std::lock_guard lock(in_.mu);
      in_.reader_closed = true;
    }
    in_.cv.notify_all();
  }

  BufferSizes set_buffer_sizes(std::optional<std::size_t> send,
                               std::optional<std::size_t> recv) override {
    sizes_.requested_send = send;
    sizes_.requested_recv = recv;
    sizes_.granted_send = send.value_or(0);
    sizes_.granted_recv = recv.value_or(0);
    return sizes_;
  }

  [[nodiscard]] std::string peer_description() const override { return name_; }

 private:
  void check_writable() const {
    if (closed_.load() || state_->disconnected.load()) {
      throw Error(Errc::kChannelClosed, name_ + " is closed");
    }
    if (out_.reader_closed) throw Error(Errc::kChannelClosed, name_ + ": peer closed");
  }

  // Caller holds out_.mu.
  void enqueue(std::span<const std::byte> bytes) {
    const auto& profile = state_->profile;
    const auto& stalls = profile.stall_schedule;
    while (!bytes.empty()) {
      const auto now = Clock::now();
      while (out_.next_stall < stalls.size() &&
             stalls[out_.next_stall].start_byte_offset <= out_.offset) {
        const auto pause = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double, std::milli>(stalls[out_.next_stall].duration_ms));
        out_.free_at = std::max(now, out_.free_at) + pause;
        ++out_.next_stall;
      }
      std::size_t len = std::min(bytes.size(), kSegmentBytes);
      if (out_.next_stall < stalls.size()) {
        len = static_cast<std::size_t>(
            std::min<std::uint64_t>(len, stalls[out_.next_stall].start_byte_offset - out_.offset));
      }
      const auto start = std::max(now, out_.free_at);
      Clock::duration serialization{};
      if (profile.per_stream_cap_bits_per_sec) {
        serialization = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(
            static_cast<double>(len) * 8.0 / *profile.per_stream_cap_bits_per_sec));
      }
      out_.free_at = start + serialization;
      out_.queue.push_back(Segment{out_.free_at + state_->latency,
                                   std::vector<std::byte>(bytes.begin(), bytes.begin() + len), 0});
      out_.offset += len;
      bytes = bytes.subspan(len);
    }
  }

  std::shared_ptr<PairState> state_;
  Wire& out_;
  Wire& in_;
  std::string name_;
  BufferSizes sizes_;
  std::atomic<bool> closed_{false};
};

}  // namespace

void ImpairmentProfile::validate() const {
  if (!(one_way_latency_ms >= 0.0)) {
    throw Error(Errc::kInvalidConfig, "one_way_latency_ms must be non-negative");
  }
  if (per_stream_cap_bits_per_sec && !(*per_stream_cap_bits_per_sec > 0.0)) {
    throw Error(Errc::kInvalidConfig, "per_stream_cap_bits_per_sec must be positive");
  }
  for (std::size_t i = 0; i < stall_schedule.size(); ++i) {
    if (!(stall_schedule[i].duration_ms >= 0.0)) {
      throw Error(Errc::kInvalidConfig, "stall durations must be non-negative");
    }
    if (i > 0 && stall_schedule[i].start_byte_offset <= stall_schedule[i - 1].start_byte_offset) {
      throw Error(Errc::kInvalidConfig, "stall offsets must be strictly increasing");
    }
  }
}

LinkPair impaired_pair(const ImpairmentProfile& profile) {
  profile.validate();
  auto state = std::make_shared<PairState>();
  state->profile = profile;
  state->latency = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double, std::milli>(profile.one_way_latency_ms));
  const std::uint64_t id = g_pair_counter.fetch_add(1);
  return {std::make_unique<ImpairedLink>(state, 0, id), std::make_unique<ImpairedLink>(state, 1, id)};
}

InstancePair connected_instances(const std::vector<ImpairmentProfile>& profiles,
                                 const ChannelConfig& base) {
  std::vector<std::unique_ptr<Link>> first_links;
  std::vector<std::unique_ptr<Link>> second_links;
  for (const auto& profile : profiles) {
    auto [a, b] = impaired_pair(profile);
    first_links.push_back(std::move(a));
    second_links.push_back(std::move(b));
  }
  ChannelConfig first_cfg = base;
  first_cfg.role = Role::kConnect;
  ChannelConfig second_cfg = base;
  second_cfg.role = Role::kAccept;

  std::optional<Mpw> second;
  std::exception_ptr second_error;
  std::thread peer([&] {
    try {
      second.emplace(Mpw::from_links(std::move(second_links), second_cfg));
    } catch (...) {
      second_error = std::current_exception();
    }
  });
  std::optional<Mpw> first;
  try {
    first.emplace(Mpw::from_links(std::move(first_links), first_cfg));
  } catch (...) {
    peer.join();
    throw;
  }
  peer.join();
  if (second_error) std::rethrow_exception(second_error);
  return InstancePair{std::move(*first), std::move(*second)};
}

ScalingResult capped_scaling_scenario(std::size_t n_streams, double cap_bits_per_sec,
                                      std::uint64_t msg_bytes) {
  if (n_streams == 0) throw Error(Errc::kInvalidArgument, "need at least one stream");
  ImpairmentProfile profile;
  profile.per_stream_cap_bits_per_sec = cap_bits_per_sec;
  auto pair = connected_instances(std::vector<ImpairmentProfile>(n_streams, profile));
  const Path path = Path::range(0, n_streams);
  const std::vector<std::byte> payload(static_cast<std::size_t>(msg_bytes), std::byte{0x5a});
  std::vector<std::byte> received(static_cast<std::size_t>(msg_bytes));

  const auto start = Clock::now();
  std::exception_ptr send_error;
  std::thread sender([&] {
    try {
      pair.first.send(payload, path);
    } catch (...) {
      send_error = std::current_exception();
    }
  });
  try {
    pair.second.recv_into(received, path);
  } catch (...) {
    pair.first.finalize();
    sender.join();
    throw;
  }
  const auto elapsed = std::chrono::duration<double>(Clock::now() - start);
  sender.join();
  if (send_error) std::rethrow_exception(send_error);

  ScalingResult result;
  result.streams = n_streams;
  result.msg_bytes = msg_bytes;
  result.elapsed = elapsed;
  if (msg_bytes == 0) {
    result.degenerate = true;
    return result;
  }
  result.aggregate_bits_per_sec = static_cast<double>(msg_bytes) * 8.0 / elapsed.count();
  return result;
}

}  // namespace mpw::testkit
