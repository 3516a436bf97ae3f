#include "mpw/parallel.hpp"

#include <string>
#include <utility>

#include "mpw/error.hpp"

namespace mpw {

std::vector<std::exception_ptr> run_concurrently(std::vector<ChannelTask>& tasks) {
  std::vector<std::exception_ptr> errors(tasks.size());
  auto guarded = [&](std::size_t i) {
    try {
      tasks[i].run();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (tasks.size() <= 1) {
    if (!tasks.empty()) guarded(0);
    return errors;
  }
  {
    std::vector<std::jthread> workers;
    workers.reserve(tasks.size() - 1);
    for (std::size_t i = 1; i < tasks.size(); ++i) workers.emplace_back(guarded, i);
    guarded(0);
  }
  return errors;
}

void raise_collective(std::string_view op, const std::vector<ChannelTask>& tasks,
                      const std::vector<std::exception_ptr>& errors) {
  std::vector<ChannelFailure> failures;
  std::exception_ptr first;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    if (!first) first = errors[i];
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      failures.push_back({tasks[i].channel, e.code(), e.what()});
    } catch (const std::exception& e) {
      failures.push_back({tasks[i].channel, Errc::kIoFailure, e.what()});
    }
  }
  if (!first) return;
  try {
    std::rethrow_exception(first);
  } catch (const Error& e) {
    Error copy = e;
    if (!copy.channel()) copy.set_channel(failures.front().channel);
    throw std::move(copy).with_failures(std::move(failures));
  } catch (const std::exception& e) {
    throw Error(Errc::kIoFailure, std::string(op) + ": " + e.what())
        .with_channel(failures.front().channel)
        .with_failures(std::move(failures));
  }
}

}  // namespace mpw
