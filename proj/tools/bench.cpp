// Two-way exchange throughput sweep over stream counts and message sizes.
//
//   bench --role initiator|responder --peer host --base-port N --streams LIST
//         --sizes LIST --iterations N [--paper-sizes] --out FILE.csv
//
// Throughput per exchange counts both directions: 2 * msg_bytes * 8 / seconds,
// reported in Gbit/s. Halve it for the one-way rate.

#include <charconv>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "mpw/bench.hpp"
#include "mpw/error.hpp"

namespace {

// "65536", "64K", "8M", "1G" (binary multiples).
std::optional<std::uint64_t> parse_size(const std::string& text) {
  std::uint64_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr == first) return std::nullopt;
  const std::string suffix(ptr, last);
  static const std::map<std::string, std::uint64_t> kUnits = {
      {"", 1},           {"K", 1ULL << 10}, {"KiB", 1ULL << 10}, {"M", 1ULL << 20},
      {"MiB", 1ULL << 20}, {"G", 1ULL << 30}, {"GiB", 1ULL << 30}};
  const auto unit = kUnits.find(suffix);
  if (unit == kUnits.end()) return std::nullopt;
  return value * unit->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "MPWide two-way exchange benchmark. Throughput counts both directions "
      "(2 x msg_bytes x 8 / exchange time)."};
  mpw::bench::BenchPlan plan;
  std::string role = "initiator";
  std::vector<std::string> sizes;
  bool paper_sizes = false;
  std::string samples_out;
  std::optional<std::size_t> socket_buffer;
  double connect_timeout_sec = 30.0;

  app.add_option("--role", role, "initiator or responder")
      ->required()
      ->check(CLI::IsMember({"initiator", "responder"}));
  app.add_option("--peer", plan.peer_host, "Peer host (initiator dials it)");
  app.add_option("--base-port", plan.base_port, "Control port; cells use base+1..base+streams")
      ->required();
  app.add_option("--streams", plan.stream_counts, "Comma-separated stream counts")
      ->delimiter(',');
  auto* sizes_opt = app.add_option("--sizes", sizes, "Comma-separated sizes (e.g. 1M,8M,64M)")
                        ->delimiter(',');
  app.add_flag("--paper-sizes", paper_sizes, "Use 8, 64 and 512 MiB")->excludes(sizes_opt);
  app.add_option("--iterations", plan.iterations, "Timed exchanges per cell");
  app.add_option("--warmup", plan.warmup_iterations, "Untimed exchanges per cell");
  app.add_option("--socket-buffer", socket_buffer, "Socket send/recv buffer bytes");
  app.add_option("--connect-timeout", connect_timeout_sec, "Seconds to wait for the peer")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", plan.output_path, "CSV output file")->required();
  app.add_option("--samples-out", samples_out, "Per-exchange samples CSV");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  plan.role = role == "initiator" ? mpw::bench::BenchRole::kInitiator
                                  : mpw::bench::BenchRole::kResponder;
  if (paper_sizes) {
    plan.msg_sizes_bytes.assign(mpw::bench::kPaperSizes.begin(), mpw::bench::kPaperSizes.end());
  } else if (!sizes.empty()) {
    plan.msg_sizes_bytes.clear();
    for (const auto& s : sizes) {
      const auto bytes = parse_size(s);
      if (!bytes) {
        spdlog::error("bad size '{}'", s);
        return 2;
      }
      plan.msg_sizes_bytes.push_back(*bytes);
    }
  }
  plan.socket_buffer_bytes = socket_buffer;
  plan.connect_timeout =
      std::chrono::milliseconds(static_cast<std::int64_t>(connect_timeout_sec * 1000.0));

  try {
    plan.validate();
  } catch (const mpw::Error& e) {
    spdlog::error("invalid plan: {}", e.what());
    return 2;
  }

  try {
    const auto records = mpw::bench::run_benchmark(plan, [](const mpw::bench::CellReport& r) {
      const auto& rec = r.record;
      if (rec.status == mpw::CellStatus::kOk) {
        spdlog::info("streams={:>3} bytes={:>10} mean={:.3f} Gbit/s stderr={:.3f} rtt={:.3f} ms",
                     rec.streams, rec.msg_size_bytes, rec.mean_gbps, rec.stderr_gbps,
                     r.barrier_rtt.count() * 1e3);
      } else {
        spdlog::warn("streams={:>3} bytes={:>10} failed", rec.streams, rec.msg_size_bytes);
      }
    });
    mpw::bench::emit_csv(records, plan.output_path);
    if (!samples_out.empty()) mpw::bench::emit_samples_csv(records, samples_out);
  } catch (const mpw::Error& e) {
    spdlog::error("benchmark failed: {}", e.what());
    return 1;
  }
  return 0;
}
