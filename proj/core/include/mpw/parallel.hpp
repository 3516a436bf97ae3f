#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <string_view>
#include <thread>
#include <vector>

namespace mpw {

/// A unit of per-channel work inside a collective operation.
struct ChannelTask {
  std::size_t channel;
  std::function<void()> run;
};

/// Runs every task on its own thread (the first on the calling thread) and
/// joins them all. Returns one exception slot per task.
std::vector<std::exception_ptr> run_concurrently(std::vector<ChannelTask>& tasks);

/// Rethrows the first failure in task order as an Error that also lists every
/// failed channel. Returns normally when nothing failed.
void raise_collective(std::string_view op, const std::vector<ChannelTask>& tasks,
                      const std::vector<std::exception_ptr>& errors);

}  // namespace mpw
