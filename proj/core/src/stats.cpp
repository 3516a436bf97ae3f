#include "mpw/stats.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "mpw/error.hpp"

namespace mpw {

SampleStats bench_stats(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) {
    throw Error(Errc::kInsufficientSamples,
                "need at least 2 samples, got " + std::to_string(n));
  }
  // Two-pass: mean first, then the corrected sum of squared deviations.
  double sum = 0.0;
  for (double s : samples) sum += s;
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  double comp = 0.0;
  for (double s : samples) {
    const double d = s - mean;
    sq += d * d;
    comp += d;
  }
  const double var = (sq - comp * comp / static_cast<double>(n)) / static_cast<double>(n - 1);
  const double sd = std::sqrt(var > 0.0 ? var : 0.0);
  return {mean, sd / std::sqrt(static_cast<double>(n))};
}

BenchRecord make_record(std::size_t streams, std::uint64_t msg_size_bytes,
                        std::vector<double> samples_gbps) {
  const SampleStats stats = bench_stats(samples_gbps);
  BenchRecord record;
  record.streams = streams;
  record.msg_size_bytes = msg_size_bytes;
  record.iterations = samples_gbps.size();
  record.samples_gbps = std::move(samples_gbps);
  record.mean_gbps = stats.mean;
  record.stderr_gbps = stats.std_error;
  return record;
}

BenchRecord make_failed_record(std::size_t streams, std::uint64_t msg_size_bytes,
                               std::size_t planned_iterations) {
  BenchRecord record;
  record.streams = streams;
  record.msg_size_bytes = msg_size_bytes;
  record.iterations = planned_iterations;
  record.status = CellStatus::kFailed;
  return record;
}

}  // namespace mpw
