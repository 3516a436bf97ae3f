// Peak heap use of a benchmark sweep, measured by replacing global new/delete.

#include <gtest/gtest.h>

#include <malloc.h>

#include <atomic>
#include <cstdlib>
#include <new>

#include "mpw/bench.hpp"
#include "support.hpp"

namespace {

std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_peak{0};

void* tracked_alloc(std::size_t n) {
  void* p = std::malloc(n == 0 ? 1 : n);
  if (p == nullptr) throw std::bad_alloc();
  const auto live = g_live.fetch_add(static_cast<std::int64_t>(malloc_usable_size(p))) +
                    static_cast<std::int64_t>(malloc_usable_size(p));
  auto peak = g_peak.load();
  while (live > peak && !g_peak.compare_exchange_weak(peak, live)) {
  }
  return p;
}

void tracked_free(void* p) noexcept {
  if (p == nullptr) return;
  g_live.fetch_sub(static_cast<std::int64_t>(malloc_usable_size(p)));
  std::free(p);
}

}  // namespace

void* operator new(std::size_t n) { return tracked_alloc(n); }
void* operator new[](std::size_t n) { return tracked_alloc(n); }
void operator delete(void* p) noexcept { tracked_free(p); }
void operator delete[](void* p) noexcept { tracked_free(p); }
void operator delete(void* p, std::size_t) noexcept { tracked_free(p); }
void operator delete[](void* p, std::size_t) noexcept { tracked_free(p); }

namespace mpw::bench {
namespace {

using namespace std::chrono_literals;

TEST(BenchMemory, PeakHeapWithinTwoMessagesPerSide) {
  constexpr std::uint64_t kLargest = 16 * kMiB;
  const auto base = test::free_port_range(5);
  auto plan = [&](BenchRole role) {
    BenchPlan p;
    p.role = role;
    p.base_port = base;
    p.stream_counts = {1, 4};
    p.msg_sizes_bytes = {kMiB, kLargest};
    p.iterations = 3;
    p.warmup_iterations = 1;
    p.connect_timeout = 10s;
    return p;
  };
  const auto before = g_live.load();
  g_peak.store(before);
  test::run_both([&] { run_benchmark(plan(BenchRole::kResponder)); },
                 [&] { run_benchmark(plan(BenchRole::kInitiator)); });
  const auto growth = g_peak.load() - before;
  // Both sides share this process. Allow 1 MiB for channels, threads and
  // bookkeeping on top of the message buffers.
  const std::int64_t bound = 2 * (2 * static_cast<std::int64_t>(kLargest)) + kMiB;
  EXPECT_LE(growth, bound) << "peak growth " << growth << " bytes";
  EXPECT_GE(growth, 2 * static_cast<std::int64_t>(kLargest));
}

}  // namespace
}  // namespace mpw::bench
