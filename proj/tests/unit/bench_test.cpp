#include <gtest/gtest.h>

#include <clocale>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mpw/bench.hpp"
#include "mpw/error.hpp"
#include "mpw/testkit.hpp"
#include "support.hpp"

namespace mpw::bench {
namespace {

using namespace std::chrono_literals;
using test::free_port_range;
using test::read_file;
using test::run_both;
using test::temp_path;

template <typename F>
Errc error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no mpw::Error thrown";
  return Errc::kInvalidArgument;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

constexpr const char* kHeader = "streams,msg_bytes,iterations,mean_gbps,stderr_gbps,status";

TEST(ExchangeGbps, CountsBothDirections) {
  // 1 MiB each way in one second: 2 * 2^20 * 8 bits.
  EXPECT_DOUBLE_EQ(exchange_gbps(kMiB, 1s), 2.0 * 1048576 * 8 / 1e9);
  EXPECT_DOUBLE_EQ(exchange_gbps(1'000'000'000 / 16, 500ms), 2.0);
}

TEST(Csv, OneRecordIsTwoLines) {
  const std::vector<BenchRecord> records{make_record(4, 8 * kMiB, {1.0, 3.0})};
  const auto lines = lines_of(format_csv(records));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], kHeader);
  // mean 2, sample sd sqrt(2), stderr 1.
  EXPECT_EQ(lines[1], "4,8388608,2,2,1,ok");
}

TEST(Csv, FailedCellHasEmptyStats) {
  const std::vector<BenchRecord> records{make_failed_record(16, kMiB, 100)};
  const auto lines = lines_of(format_csv(records));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[1], "16,1048576,100,,,failed");
}

TEST(Csv, RowsAreSizeMajorStreamsMinor) {
  std::vector<BenchRecord> records;
  for (auto size : {64 * kMiB, kMiB, 8 * kMiB}) {
    for (std::size_t s : {8, 1, 2}) records.push_back(make_record(s, size, {1.0, 1.0}));
  }
  const auto lines = lines_of(format_csv(records));
  ASSERT_EQ(lines.size(), 10u);
  std::vector<std::pair<std::uint64_t, std::size_t>> order;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream row(lines[i]);
    std::string streams;
    std::string bytes;
    std::getline(row, streams, ',');
    std::getline(row, bytes, ',');
    order.emplace_back(std::stoull(bytes), std::stoul(streams));
  }
  EXPECT_TRUE(std::is_sorted(order.begin(), order.end()));
}

TEST(Csv, DefaultSweepIsTwentyFourRows) {
  std::vector<BenchRecord> records;
  for (auto size : kDeskSizes) {
    for (auto s : kDefaultStreamCounts) records.push_back(make_record(s, size, {1.0, 2.0}));
  }
  EXPECT_EQ(lines_of(format_csv(records)).size(), 25u);
}

TEST(Csv, DecimalPointIgnoresLocale) {
  const char* chosen = nullptr;
  for (const char* name : {"de_DE.UTF-8", "de_DE.utf8", "fr_FR.UTF-8", "fr_FR.utf8"}) {
    if (std::setlocale(LC_ALL, name) != nullptr) {
      chosen = name;
      break;
    }
  }
  const std::vector<BenchRecord> records{make_record(1, kMiB, {1.25, 1.75})};
  const auto csv = format_csv(records);
  std::setlocale(LC_ALL, "C");
  EXPECT_NE(csv.find(",1.5,0.25,ok"), std::string::npos) << csv;
  if (chosen == nullptr) GTEST_SKIP() << "no comma-decimal locale installed";
}

TEST(Csv, EmitErrors) {
  EXPECT_EQ(error_code([] { emit_csv({}, temp_path("empty.csv")); }), Errc::kInvalidArgument);
  const std::vector<BenchRecord> records{make_record(1, kMiB, {1.0, 2.0})};
  EXPECT_EQ(error_code([&] { emit_csv(records, "/nonexistent/dir/out.csv"); }),
            Errc::kIoFailure);
  const auto path = temp_path("one.csv");
  emit_csv(records, path);
  EXPECT_EQ(read_file(path), format_csv(records));
}

TEST(Csv, SamplesFileListsEveryExchange) {
  const std::vector<BenchRecord> records{make_record(2, kMiB, {1.0, 2.0, 4.0}),
                                         make_failed_record(4, kMiB, 3)};
  const auto path = temp_path("samples.csv");
  emit_samples_csv(records, path);
  const auto lines = lines_of(read_file(path));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "streams,msg_bytes,iteration,gbps");
  EXPECT_EQ(lines[3], "2,1048576,2,4");
}

TEST(Plan, Validation) {
  BenchPlan plan;
  EXPECT_NO_THROW(plan.validate());
  plan.iterations = 1;
  EXPECT_EQ(error_code([&] { plan.validate(); }), Errc::kInsufficientSamples);
  plan = {};
  plan.stream_counts = {0};
  EXPECT_EQ(error_code([&] { plan.validate(); }), Errc::kInvalidConfig);
  plan.stream_counts = {129};
  EXPECT_EQ(error_code([&] { plan.validate(); }), Errc::kInvalidConfig);
  plan = {};
  plan.msg_sizes_bytes = {};
  EXPECT_EQ(error_code([&] { plan.validate(); }), Errc::kInvalidConfig);
  plan = {};
  plan.base_port = 65500;
  EXPECT_EQ(error_code([&] { plan.validate(); }), Errc::kInvalidConfig);
}

TEST(Plan, HashCoversSharedFields) {
  BenchPlan a;
  BenchPlan b;
  b.role = BenchRole::kResponder;
  b.output_path = "elsewhere.csv";
  b.peer_host = "10.0.0.1";
  EXPECT_EQ(plan_hash(a), plan_hash(b));
  b.iterations = 99;
  EXPECT_NE(plan_hash(a), plan_hash(b));
  b = a;
  b.stream_counts = {1, 2};
  EXPECT_NE(plan_hash(a), plan_hash(b));
}

TEST(RunCell, FewerThanTwoIterationsRejected) {
  auto pair = testkit::connected_instances({{}});
  std::vector<std::byte> buf(16);
  EXPECT_EQ(error_code([&] { run_cell(pair.first, Path{0}, 16, 1, 0, buf, buf); }),
            Errc::kInsufficientSamples);
}

// Runs the same cell on both instances of a testkit pair.
BenchRecord run_pair_cell(testkit::InstancePair& pair, std::size_t streams,
                          std::uint64_t bytes, std::size_t iterations, std::size_t warmup) {
  const auto path = Path::range(0, streams);
  std::vector<std::byte> send_a(bytes, std::byte{1});
  std::vector<std::byte> recv_a(bytes);
  std::vector<std::byte> send_b(bytes, std::byte{2});
  std::vector<std::byte> recv_b(bytes);
  BenchRecord record;
  run_both([&] { run_cell(pair.second, path, bytes, iterations, warmup, send_b, recv_b); },
           [&] { record = run_cell(pair.first, path, bytes, iterations, warmup, send_a, recv_a); });
  return record;
}

// The link capacity R is shared by the two directions of the exchange, so each
// direction is capped at R/2 and the two-way reading should come back near R.
TEST(RunCell, SingleStreamMeanMatchesLinkRate) {
  constexpr double kRate = 200e6;
  testkit::ImpairmentProfile profile;
  profile.per_stream_cap_bits_per_sec = kRate / 2;
  auto pair = testkit::connected_instances({profile});
  const auto record = run_pair_cell(pair, 1, kMiB, 10, 1);
  ASSERT_EQ(record.samples_gbps.size(), 10u);
  EXPECT_GE(record.mean_gbps * 1e9, 0.75 * kRate);
  EXPECT_LE(record.mean_gbps * 1e9, 1.1 * kRate);
}

TEST(RunCell, FourCappedStreamsBeatOne) {
  testkit::ImpairmentProfile profile;
  profile.per_stream_cap_bits_per_sec = 100e6;
  auto pair = testkit::connected_instances(std::vector(4, profile));
  const auto one = run_pair_cell(pair, 1, kMiB, 4, 1);
  const auto four = run_pair_cell(pair, 4, kMiB, 4, 1);
  EXPECT_GT(four.mean_gbps, one.mean_gbps);
}

// A single sample deviation estimate from 10 exchanges scatters by roughly a
// quarter of its value, so both sides of the ratio are averaged over several
// cells. The cells are interleaved so both sizes see the same background load.
TEST(RunCell, StandardErrorShrinksWithRootN) {
  testkit::ImpairmentProfile profile;
  profile.per_stream_cap_bits_per_sec = 100e6;
  auto pair = testkit::connected_instances({profile});
  double small = 0;
  double large = 0;
  constexpr int kRounds = 4;
  constexpr int kSmallPerRound = 5;
  for (int round = 0; round < kRounds; ++round) {
    large += run_pair_cell(pair, 1, 256 * 1024, 100, 1).stderr_gbps / kRounds;
    for (int i = 0; i < kSmallPerRound; ++i) {
      small += run_pair_cell(pair, 1, 256 * 1024, 10, 1).stderr_gbps / (kRounds * kSmallPerRound);
    }
  }
  ASSERT_GT(large, 0.0);
  const double ratio = small / large;
  RecordProperty("stderr_ratio", std::to_string(ratio));
  EXPECT_GE(ratio, 2.5) << "stderr n=10 " << small << ", n=100 " << large;
  EXPECT_LE(ratio, 4.0) << "stderr n=10 " << small << ", n=100 " << large;
}

BenchPlan loopback_plan(BenchRole role, std::uint16_t base) {
  BenchPlan plan;
  plan.role = role;
  plan.base_port = base;
  plan.stream_counts = {1, 2};
  plan.msg_sizes_bytes = {64 * 1024, 3 * kMiB + 5};
  plan.iterations = 3;
  plan.warmup_iterations = 1;
  plan.connect_timeout = 10s;
  return plan;
}

TEST(RunBenchmark, LoopbackSweep) {
  const auto base = free_port_range(3);
  std::vector<BenchRecord> initiator;
  std::vector<BenchRecord> responder;
  std::vector<double> rtts;
  run_both([&] { responder = run_benchmark(loopback_plan(BenchRole::kResponder, base)); },
           [&] {
             initiator = run_benchmark(loopback_plan(BenchRole::kInitiator, base),
                                       [&](const CellReport& r) {
                                         rtts.push_back(r.barrier_rtt.count());
                                       });
           });
  ASSERT_EQ(initiator.size(), 4u);
  ASSERT_EQ(responder.size(), 4u);
  EXPECT_EQ(rtts.size(), 4u);
  const std::vector<std::pair<std::uint64_t, std::size_t>> expected{
      {64 * 1024, 1}, {64 * 1024, 2}, {3 * kMiB + 5, 1}, {3 * kMiB + 5, 2}};
  for (std::size_t i = 0; i < initiator.size(); ++i) {
    const auto& r = initiator[i];
    EXPECT_EQ(r.status, CellStatus::kOk);
    EXPECT_EQ(r.msg_size_bytes, expected[i].first);
    EXPECT_EQ(r.streams, expected[i].second);
    ASSERT_EQ(r.samples_gbps.size(), 3u);
    const double mean = std::accumulate(r.samples_gbps.begin(), r.samples_gbps.end(), 0.0) / 3;
    EXPECT_NEAR(r.mean_gbps, mean, 1e-12);
    EXPECT_GT(r.mean_gbps, 0.0);
    EXPECT_GE(r.stderr_gbps, 0.0);
  }
}

TEST(RunBenchmark, HundredExchangesOfEightMiB) {
  const auto base = free_port_range(2);
  auto plan = [&](BenchRole role) {
    BenchPlan p = loopback_plan(role, base);
    p.stream_counts = {1};
    p.msg_sizes_bytes = {8 * kMiB};
    p.iterations = 100;
    return p;
  };
  std::vector<BenchRecord> records;
  run_both([&] { run_benchmark(plan(BenchRole::kResponder)); },
           [&] { records = run_benchmark(plan(BenchRole::kInitiator)); });
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].samples_gbps.size(), 100u);
  EXPECT_EQ(records[0].iterations, 100u);
  EXPECT_GE(records[0].stderr_gbps, 0.0);
}

TEST(RunBenchmark, PlanMismatchDetected) {
  const auto base = free_port_range(3);
  auto other = loopback_plan(BenchRole::kResponder, base);
  other.iterations = 4;
  Errc initiator_code{};
  Errc responder_code{};
  run_both(
      [&] { responder_code = error_code([&] { run_benchmark(other); }); },
      [&] {
        initiator_code =
            error_code([&] { run_benchmark(loopback_plan(BenchRole::kInitiator, base)); });
      });
  EXPECT_EQ(initiator_code, Errc::kPlanMismatch);
  EXPECT_EQ(responder_code, Errc::kPlanMismatch);
}

TEST(BenchCli, InitiatorAndResponderWriteCsv) {
  const auto base = std::to_string(free_port_range(3));
  const auto out = temp_path("cli-bench.csv");
  const auto samples = temp_path("cli-samples.csv");
  const std::vector<std::string> common{"--base-port", base,     "--streams",   "1,2",
                                        "--sizes",     "64K,1M", "--iterations", "3",
                                        "--connect-timeout", "10"};
  auto args = [&](const std::string& role, const std::string& csv) {
    std::vector<std::string> a{"--role", role, "--peer", "127.0.0.1", "--out", csv};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  auto responder_args = args("responder", temp_path("cli-resp.csv"));
  auto initiator_args = args("initiator", out);
  initiator_args.insert(initiator_args.end(), {"--samples-out", samples});
  test::Process responder(MPW_BENCH_EXE, responder_args, temp_path("cli-resp.log"));
  test::Process initiator(MPW_BENCH_EXE, initiator_args, temp_path("cli-init.log"));
  EXPECT_EQ(initiator.wait(60s), std::optional<int>(0));
  EXPECT_EQ(responder.wait(60s), std::optional<int>(0));
  const auto lines = lines_of(read_file(out));
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], kHeader);
  EXPECT_EQ(lines[1].rfind("1,65536,3,", 0), 0u) << lines[1];
  EXPECT_EQ(lines[4].rfind("2,1048576,3,", 0), 0u) << lines[4];
  EXPECT_EQ(lines_of(read_file(samples)).size(), 13u);
}

TEST(BenchCli, BadArgumentsExitTwo) {
  test::Process one_iteration(
      MPW_BENCH_EXE,
      {"--role", "initiator", "--base-port", "7000", "--iterations", "1", "--out", temp_path("x.csv")},
      temp_path("cli-bad1.log"));
  EXPECT_EQ(one_iteration.wait(10s), std::optional<int>(2));
  test::Process bad_role(MPW_BENCH_EXE, {"--role", "observer", "--base-port", "7000", "--out", temp_path("x.csv")},
                         temp_path("cli-bad2.log"));
  EXPECT_EQ(bad_role.wait(10s), std::optional<int>(2));
  test::Process bad_size(MPW_BENCH_EXE,
                         {"--role", "initiator", "--base-port", "7000", "--sizes", "12Q", "--out", temp_path("x.csv")},
                         temp_path("cli-bad3.log"));
  EXPECT_EQ(bad_size.wait(10s), std::optional<int>(2));
}

}  // namespace
}  // namespace mpw::bench
