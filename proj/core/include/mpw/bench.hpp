#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpw/mpw.hpp"
#include "mpw/stats.hpp"

namespace mpw::bench {

inline constexpr std::uint64_t kMiB = 1024 * 1024;
inline constexpr std::array<std::size_t, 8> kDefaultStreamCounts = {1, 2, 4, 8, 16, 32, 64, 124};
inline constexpr std::array<std::uint64_t, 3> kDeskSizes = {1 * kMiB, 8 * kMiB, 64 * kMiB};
inline constexpr std::array<std::uint64_t, 3> kPaperSizes = {8 * kMiB, 64 * kMiB, 512 * kMiB};
inline constexpr std::size_t kMaxStreams = 128;

enum class BenchRole : std::uint8_t { kInitiator, kResponder };

struct BenchPlan {
  BenchRole role = BenchRole::kInitiator;
  std::string peer_host = "127.0.0.1";
  /// Control channel on base_port; cell channels on base_port + 1 + i.
  std::uint16_t base_port = 7000;
  std::vector<std::size_t> stream_counts{kDefaultStreamCounts.begin(), kDefaultStreamCounts.end()};
  std::vector<std::uint64_t> msg_sizes_bytes{kDeskSizes.begin(), kDeskSizes.end()};
  std::size_t iterations = 100;
  std::size_t warmup_iterations = 5;
  std::string output_path;
  std::optional<std::size_t> socket_buffer_bytes;
  std::chrono::milliseconds connect_timeout{30'000};

  /// Throws kInvalidConfig for bad stream counts, sizes or ports, and
  /// kInsufficientSamples for fewer than two iterations.
  void validate() const;
};

/// FNV-1a over the parts of the plan both peers must agree on.
std::uint64_t plan_hash(const BenchPlan& plan);

/// Throughput of one exchange, counting both directions: 2 * bytes * 8 / s,
/// reported in Gbit/s.
double exchange_gbps(std::uint64_t msg_bytes, std::chrono::duration<double> elapsed);

/// Runs `warmup` untimed then `iterations` timed send_recv exchanges of
/// `msg_bytes` over `path`. The buffers must hold at least msg_bytes.
BenchRecord run_cell(Mpw& mpw, const Path& path, std::uint64_t msg_bytes, std::size_t iterations,
                     std::size_t warmup, std::span<const std::byte> send_buf,
                     std::span<std::byte> recv_buf);

struct CellReport {
  const BenchRecord& record;
  std::chrono::duration<double> barrier_rtt;
};

/// Full sweep against a peer running the matching plan (size-major,
/// streams-minor). A failed cell is recorded as failed and the sweep moves on.
/// Throws kPlanMismatch when the peer's plan differs.
std::vector<BenchRecord> run_benchmark(const BenchPlan& plan,
                                       const std::function<void(const CellReport&)>& on_cell = {});

/// CSV with header `streams,msg_bytes,iterations,mean_gbps,stderr_gbps,status`.
std::string format_csv(std::span<const BenchRecord> records);
/// Writes format_csv output; throws kInvalidArgument on no records and
/// kIoFailure on an unwritable path.
void emit_csv(std::span<const BenchRecord> records, const std::string& path);
/// Raw per-exchange samples: `streams,msg_bytes,iteration,gbps`.
void emit_samples_csv(std::span<const BenchRecord> records, const std::string& path);

}  // namespace mpw::bench
