#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mpw/mpw.hpp"

namespace mpw::test {

/// Distinct ports the kernel considered free a moment ago.
std::vector<std::uint16_t> free_ports(std::size_t n);

/// First of `n` consecutive ports that were all free a moment ago.
std::uint16_t free_port_range(std::size_t n);

/// Deterministic pseudo-random bytes.
std::vector<std::byte> random_bytes(std::size_t n, std::uint64_t seed);

/// Two instances joined by `n` loopback TCP channels: `first` connects,
/// `second` accepts. `tweak` may adjust each config before init.
struct LoopbackPair {
  Mpw first;
  Mpw second;
};
LoopbackPair loopback_pair(std::size_t n,
                           const std::function<void(ChannelConfig&)>& tweak = {});

/// Runs `a` on a helper thread and `b` on the caller; rethrows the first error
/// after both finish.
void run_both(const std::function<void()>& a, const std::function<void()>& b);

double seconds_since(std::chrono::steady_clock::time_point start);

/// A child process started with posix_spawn; killed on destruction if still
/// running.
class Process {
 public:
  /// A non-empty `output` receives the child's stdout and stderr.
  Process(const std::string& exe, const std::vector<std::string>& args,
          const std::string& output = {});
  Process(Process&& other) noexcept;
  Process& operator=(Process&&) = delete;
  ~Process();

  /// Waits up to `timeout`; returns the exit code, or nullopt on timeout.
  std::optional<int> wait(std::chrono::milliseconds timeout);
  void signal(int sig);
  [[nodiscard]] int pid() const noexcept { return pid_; }

 private:
  int pid_ = -1;
  std::optional<int> status_;
};

std::string temp_path(const std::string& name);
std::string read_file(const std::string& path);

}  // namespace mpw::test
