#include <benchmark/benchmark.h>

#include <thread>

#include "mpw/stripe.hpp"
#include "mpw/testkit.hpp"
#include "mpw/wire.hpp"

namespace {

void BM_StripeLayout(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::uint64_t n = 1'000'003;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mpw::stripe_layout(n, k));
    ++n;
  }
}
BENCHMARK(BM_StripeLayout)->RangeMultiplier(4)->Range(1, 128);

void BM_HeaderRoundTrip(benchmark::State& state) {
  std::uint64_t len = 12345;
  for (auto _ : state) {
    const auto bytes = mpw::encode_header(mpw::FrameKind::kData, len);
    benchmark::DoNotOptimize(mpw::decode_header(bytes));
    len = (len * 6364136223846793005ULL + 1) & ((std::uint64_t{1} << 40) - 1);
  }
}
BENCHMARK(BM_HeaderRoundTrip);

// Two-way exchange over unimpaired in-process links.
void BM_TestkitSendRecv(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  const auto bytes = static_cast<std::size_t>(state.range(1));
  auto pair = mpw::testkit::connected_instances(
      std::vector<mpw::testkit::ImpairmentProfile>(width));
  const auto path = mpw::Path::range(0, width);
  std::vector<std::byte> out_a(bytes, std::byte{1});
  std::vector<std::byte> in_a(bytes);
  std::vector<std::byte> out_b(bytes, std::byte{2});
  std::vector<std::byte> in_b(bytes);
  const auto rounds = static_cast<std::size_t>(state.max_iterations);
  std::thread peer([&] {
    for (std::size_t i = 0; i < rounds; ++i) pair.second.send_recv_into(out_b, in_b, path);
  });
  for (auto _ : state) pair.first.send_recv_into(out_a, in_a, path);
  peer.join();
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * 2 * bytes));
}
BENCHMARK(BM_TestkitSendRecv)
    ->Args({1, 64 << 10})
    ->Args({4, 64 << 10})
    ->Args({1, 4 << 20})
    ->Args({4, 4 << 20})
    ->Iterations(50)
    ->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
