#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mpw {

struct SampleStats {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(n)
};

/// Mean and standard error of at least two samples.
/// Throws Error(kInsufficientSamples) for fewer than two.
SampleStats bench_stats(std::span<const double> samples);

enum class CellStatus : std::uint8_t { kOk, kFailed };

/// One benchmark cell: a (streams, message size) configuration.
struct BenchRecord {
  std::size_t streams = 0;
  std::uint64_t msg_size_bytes = 0;
  std::size_t iterations = 0;
  std::vector<double> samples_gbps;
  double mean_gbps = 0.0;
  double stderr_gbps = 0.0;
  CellStatus status = CellStatus::kOk;
};

/// Builds a successful record; iterations is the sample count.
BenchRecord make_record(std::size_t streams, std::uint64_t msg_size_bytes,
                        std::vector<double> samples_gbps);

BenchRecord make_failed_record(std::size_t streams, std::uint64_t msg_size_bytes,
                               std::size_t planned_iterations);

}  // namespace mpw
