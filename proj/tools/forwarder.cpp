// Forwarder daemon: relays every frame between two channel sets.
//
//   forwarder --config <path> [--log-interval <sec>]
//
// Exit codes: 0 clean stop, 1 runtime failure, 2 configuration error.

#include <pthread.h>
#include <signal.h>

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <optional>
#include <stop_token>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "mpw/error.hpp"
#include "mpw/mpw.hpp"
#include "mpw/relay.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

// Wakes the signal thread at shutdown without requesting a stop.
constexpr int kWakeSignal = SIGUSR2;

sigset_t handled_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, kWakeSignal);
  return set;
}

class SignalWatcher {
 public:
  explicit SignalWatcher(std::stop_source stop)
      : thread_([stop]() mutable {
          const sigset_t set = handled_signals();
          int sig = 0;
          while (sigwait(&set, &sig) == 0) {
            if (sig == kWakeSignal) return;
            spdlog::info("signal {} received, stopping", sig);
            stop.request_stop();
            return;
          }
        }) {}

  ~SignalWatcher() {
    pthread_kill(thread_.native_handle(), kWakeSignal);
    thread_.join();
  }

 private:
  std::thread thread_;
};

void log_counters(const mpw::RelayStats& stats) {
  spdlog::info("a->b {} frames {} bytes | b->a {} frames {} bytes", stats.a_to_b.frames.load(),
               stats.a_to_b.bytes.load(), stats.b_to_a.frames.load(), stats.b_to_a.bytes.load());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relay traffic between two sets of MPWide channels"};
  std::string config_path;
  std::optional<double> log_interval;
  app.add_option("--config", config_path, "Forwarder config file")->required();
  app.add_option("--log-interval", log_interval, "Seconds between counter log lines")
      ->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  // Block before any thread exists so every thread inherits the mask.
  const sigset_t set = handled_signals();
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  std::ifstream in(config_path);
  if (!in) {
    spdlog::error("cannot open config file {}", config_path);
    return kExitConfig;
  }
  mpw::ForwarderConfig config;
  std::vector<mpw::ChannelConfig> channels;
  try {
    config = mpw::parse_forwarder_config(in);
    channels = config.side_a.channel_configs();
    for (auto& c : config.side_b.channel_configs()) channels.push_back(std::move(c));
    for (const auto& c : channels) c.validate();
  } catch (const mpw::ConfigError& e) {
    spdlog::error("{}: {}", config_path, e.what());
    return kExitConfig;
  } catch (const mpw::Error& e) {
    spdlog::error("{}: {}", config_path, e.what());
    return kExitConfig;
  }
  if (!log_interval) log_interval = config.log_interval_sec;

  const std::size_t width_a = config.side_a.ports.size();
  const std::size_t width_b = config.side_b.ports.size();
  std::stop_source stop;
  SignalWatcher watcher(stop);

  std::optional<mpw::Mpw> mpw;
  try {
    spdlog::info("opening {} + {} channels", width_a, width_b);
    mpw.emplace(mpw::Mpw::init(std::move(channels), stop.get_token()));
  } catch (const mpw::Error& e) {
    if (stop.stop_requested()) return 0;
    spdlog::error("startup failed: {}", e.what());
    return kExitRuntime;
  }

  mpw::RelayStats stats;
  std::jthread logger;
  if (log_interval) {
    const auto period = std::chrono::duration<double>(*log_interval);
    logger = std::jthread([&stats, period](std::stop_token token) {
      std::mutex mu;
      std::condition_variable_any cv;
      std::unique_lock lock(mu);
      while (!cv.wait_for(lock, token, period, [] { return false; }) &&
             !token.stop_requested()) {
        log_counters(stats);
      }
    });
  }

  int rc = 0;
  try {
    const auto outcome = mpw::relay(*mpw, mpw::Path::range(0, width_a),
                                    mpw::Path::range(width_a, width_b), stats, stop.get_token());
    spdlog::info("relay finished: {}",
                 outcome == mpw::RelayOutcome::kStopped ? "stopped" : "peer closed");
  } catch (const mpw::Error& e) {
    spdlog::error("relay failed: {}", e.what());
    rc = kExitRuntime;
  }
  if (logger.joinable()) {
    logger.request_stop();
    logger.join();
  }
  log_counters(stats);
  mpw->finalize();
  return rc;
}
