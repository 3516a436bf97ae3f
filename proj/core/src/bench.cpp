#include "mpw/bench.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "mpw/error.hpp"

namespace mpw::bench {

namespace {

using Clock = std::chrono::steady_clock;

void append_double(std::string& out, double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ec == std::errc{} ? end : buf);
}

void append_uint(std::string& out, std::uint64_t value) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, end);
}

std::vector<const BenchRecord*> ordered(std::span<const BenchRecord> records) {
  std::vector<const BenchRecord*> rows;
  for (const auto& r : records) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const BenchRecord* x, const BenchRecord* y) {
    if (x->msg_size_bytes != y->msg_size_bytes) return x->msg_size_bytes < y->msg_size_bytes;
    return x->streams < y->streams;
  });
  return rows;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoFailure, "cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw Error(Errc::kIoFailure, "write to " + path + " failed");
}

std::vector<std::byte> u64_bytes(std::uint64_t value) {
  std::vector<std::byte> out(8);
  store_be64(std::span<std::byte, 8>(out.data(), 8), value);
  return out;
}

ChannelConfig endpoint(const BenchPlan& plan, std::uint16_t port, std::uint64_t link_index) {
  ChannelConfig config = plan.role == BenchRole::kInitiator
                             ? ChannelConfig::connect(plan.peer_host, port)
                             : ChannelConfig::accept(port);
  config.connect_timeout = plan.connect_timeout;
  config.retry_backoff = std::chrono::milliseconds(20);
  config.send_buffer_bytes = plan.socket_buffer_bytes;
  config.recv_buffer_bytes = plan.socket_buffer_bytes;
  config.link_index = link_index;
  return config;
}

}  // namespace

void BenchPlan::validate() const {
  if (stream_counts.empty()) throw Error(Errc::kInvalidConfig, "no stream counts");
  for (std::size_t s : stream_counts) {
    if (s == 0 || s > kMaxStreams) {
      throw Error(Errc::kInvalidConfig, "stream count " + std::to_string(s) + " outside 1..128");
    }
  }
  if (msg_sizes_bytes.empty()) throw Error(Errc::kInvalidConfig, "no message sizes");
  for (std::uint64_t size : msg_sizes_bytes) {
    if (size == 0) throw Error(Errc::kInvalidConfig, "message sizes must be positive");
  }
  if (iterations < 2) {
    throw Error(Errc::kInsufficientSamples,
                "need at least 2 iterations, got " + std::to_string(iterations));
  }
  const std::size_t widest = *std::max_element(stream_counts.begin(), stream_counts.end());
  if (base_port == 0 || std::size_t{base_port} + widest > 65535) {
    throw Error(Errc::kInvalidConfig, "base port leaves no room for " + std::to_string(widest) +
                                          " cell channels");
  }
}

std::uint64_t plan_hash(const BenchPlan& plan) {
  std::string canon = "mpw-bench/1;streams=";
  for (std::size_t s : plan.stream_counts) canon += std::to_string(s) + ",";
  canon += ";sizes=";
  for (std::uint64_t s : plan.msg_sizes_bytes) canon += std::to_string(s) + ",";
  canon += ";iterations=" + std::to_string(plan.iterations);
  canon += ";warmup=" + std::to_string(plan.warmup_iterations);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

double exchange_gbps(std::uint64_t msg_bytes, std::chrono::duration<double> elapsed) {
  return 2.0 * static_cast<double>(msg_bytes) * 8.0 / elapsed.count() / 1e9;
}

BenchRecord run_cell(Mpw& mpw, const Path& path, std::uint64_t msg_bytes, std::size_t iterations,
                     std::size_t warmup, std::span<const std::byte> send_buf,
                     std::span<std::byte> recv_buf) {
  if (send_buf.size() < msg_bytes || recv_buf.size() < msg_bytes) {
    throw Error(Errc::kInvalidArgument, "benchmark buffers smaller than the message");
  }
  if (iterations < 2) {
    throw Error(Errc::kInsufficientSamples,
                "need at least 2 iterations, got " + std::to_string(iterations));
  }
  const auto n = static_cast<std::size_t>(msg_bytes);
  const auto out = send_buf.first(n);
  const auto in = recv_buf.first(n);
  for (std::size_t i = 0; i < warmup; ++i) mpw.send_recv_into(out, in, path);
  std::vector<double> samples;
  samples.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto start = Clock::now();
    mpw.send_recv_into(out, in, path);
    samples.push_back(exchange_gbps(msg_bytes, Clock::now() - start));
  }
  return make_record(path.width(), msg_bytes, std::move(samples));
}

std::vector<BenchRecord> run_benchmark(const BenchPlan& plan,
                                       const std::function<void(const CellReport&)>& on_cell) {
  plan.validate();
  Mpw control = Mpw::init({endpoint(plan, plan.base_port, 0)});
  const Path control_path{0};

  const std::uint64_t local_hash = plan_hash(plan);
  const auto remote = control.send_recv(u64_bytes(local_hash), 8, control_path);
  const std::uint64_t remote_hash = load_be64(std::span<const std::byte, 8>(remote.data(), 8));
  if (remote_hash != local_hash) {
    throw Error(Errc::kPlanMismatch, "peer runs a different benchmark plan");
  }

  // Send and receive buffers sized for the largest message, allocated once.
  const std::uint64_t largest =
      *std::max_element(plan.msg_sizes_bytes.begin(), plan.msg_sizes_bytes.end());
  std::vector<std::byte> send_buf(static_cast<std::size_t>(largest));
  for (std::size_t i = 0; i < send_buf.size(); ++i) {
    send_buf[i] = static_cast<std::byte>((i * 131 + 7) & 0xff);
  }
  std::vector<std::byte> recv_buf(static_cast<std::size_t>(largest));

  std::vector<BenchRecord> records;
  for (std::uint64_t size : plan.msg_sizes_bytes) {
    for (std::size_t streams : plan.stream_counts) {
      const auto rtt_start = Clock::now();
      control.barrier(control_path);
      const std::chrono::duration<double> rtt = Clock::now() - rtt_start;

      BenchRecord record;
      try {
        std::vector<ChannelConfig> configs;
        for (std::size_t j = 0; j < streams; ++j) {
          configs.push_back(
              endpoint(plan, static_cast<std::uint16_t>(plan.base_port + 1 + j), j));
        }
        Mpw cell = Mpw::init(std::move(configs));
        record = run_cell(cell, Path::range(0, streams), size, plan.iterations,
                          plan.warmup_iterations, send_buf, recv_buf);
      } catch (const Error& e) {
        spdlog::warn("cell streams={} bytes={} failed: {}", streams, size, e.what());
        record = make_failed_record(streams, size, plan.iterations);
      }

      // Both peers must agree on the cell's outcome.
      const std::vector<std::byte> mine{
          std::byte{record.status == CellStatus::kOk ? std::uint8_t{1} : std::uint8_t{0}}};
      const auto theirs = control.send_recv(mine, 1, control_path);
      if (theirs[0] != std::byte{1} && record.status == CellStatus::kOk) {
        record = make_failed_record(streams, size, plan.iterations);
      }
      if (on_cell) on_cell(CellReport{record, rtt});
      records.push_back(std::move(record));
    }
  }
  control.finalize();
  return records;
}

std::string format_csv(std::span<const BenchRecord> records) {
  std::string out = "streams,msg_bytes,iterations,mean_gbps,stderr_gbps,status\n";
  for (const BenchRecord* r : ordered(records)) {
    append_uint(out, r->streams);
    out += ',';
    append_uint(out, r->msg_size_bytes);
    out += ',';
    append_uint(out, r->iterations);
    out += ',';
    if (r->status == CellStatus::kOk) {
      append_double(out, r->mean_gbps);
      out += ',';
      append_double(out, r->stderr_gbps);
      out += ",ok\n";
    } else {
      out += ",,failed\n";
    }
  }
  return out;
}

void emit_csv(std::span<const BenchRecord> records, const std::string& path) {
  if (records.empty()) throw Error(Errc::kInvalidArgument, "no records to write");
  write_file(path, format_csv(records));
}

void emit_samples_csv(std::span<const BenchRecord> records, const std::string& path) {
  std::string out = "streams,msg_bytes,iteration,gbps\n";
  for (const BenchRecord* r : ordered(records)) {
    for (std::size_t i = 0; i < r->samples_gbps.size(); ++i) {
      append_uint(out, r->streams);
      out += ',';
      append_uint(out, r->msg_size_bytes);
      out += ',';
      append_uint(out, i);
      out += ',';
      append_double(out, r->samples_gbps[i]);
      out += '\n';
    }
  }
  write_file(path, out);
}

}  // namespace mpw::bench
