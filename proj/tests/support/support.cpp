#include "support.hpp"

#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mpw/tcp.hpp"

extern char** environ;

namespace mpw::test {

namespace {

// Fixed ports are drawn from below the kernel's ephemeral range, so outgoing
// connections never take them as source ports.
std::uint16_t ephemeral_floor() {
  unsigned low = 32768;
  std::ifstream("/proc/sys/net/ipv4/ip_local_port_range") >> low;
  return static_cast<std::uint16_t>(std::clamp(low, 12000u, 65535u));
}

bool bind_loopback(UniqueFd& fd, std::uint16_t port) {
  fd = UniqueFd(::socket(AF_INET, SOCK_STREAM, 0));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  return ::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0;
}

std::mt19937& port_rng() {
  static std::mt19937 rng(std::random_device{}());
  return rng;
}

}  // namespace

std::vector<std::uint16_t> free_ports(std::size_t n) {
  std::uniform_int_distribution<int> pick(10000, ephemeral_floor() - 1);
  std::vector<UniqueFd> held;
  std::vector<std::uint16_t> ports;
  for (int attempt = 0; ports.size() < n; ++attempt) {
    if (attempt > 10000) throw std::runtime_error("free_ports: no free ports");
    const auto port = static_cast<std::uint16_t>(pick(port_rng()));
    if (std::find(ports.begin(), ports.end(), port) != ports.end()) continue;
    UniqueFd fd;
    if (!bind_loopback(fd, port)) continue;
    ports.push_back(port);
    held.push_back(std::move(fd));
  }
  return ports;
}

std::uint16_t free_port_range(std::size_t n) {
  std::uniform_int_distribution<int> pick(10000, ephemeral_floor() - static_cast<int>(n));
  for (int attempt = 0; attempt < 200; ++attempt) {
    const auto base = static_cast<std::uint16_t>(pick(port_rng()));
    bool ok = true;
    std::vector<UniqueFd> held(n);
    for (std::size_t i = 0; i < n && ok; ++i) {
      ok = bind_loopback(held[i], static_cast<std::uint16_t>(base + i));
    }
    if (ok) return base;
  }
  throw std::runtime_error("free_port_range: no free range");
}

std::vector<std::byte> random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::byte> out(n);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    std::uint64_t v = rng();
    for (int k = 0; k < 8; ++k) out[i + k] = static_cast<std::byte>((v >> (8 * k)) & 0xff);
  }
  for (std::uint64_t v = rng(); i < n; ++i, v >>= 8) out[i] = static_cast<std::byte>(v & 0xff);
  return out;
}

void run_both(const std::function<void()>& a, const std::function<void()>& b) {
  std::exception_ptr a_error;
  std::exception_ptr b_error;
  {
    std::jthread helper([&] {
      try {
        a();
      } catch (...) {
        a_error = std::current_exception();
      }
    });
    try {
      b();
    } catch (...) {
      b_error = std::current_exception();
    }
  }
  if (a_error) std::rethrow_exception(a_error);
  if (b_error) std::rethrow_exception(b_error);
}

LoopbackPair loopback_pair(std::size_t n, const std::function<void(ChannelConfig&)>& tweak) {
  const auto ports = free_ports(n);
  std::vector<ChannelConfig> connect_side;
  std::vector<ChannelConfig> accept_side;
  for (std::uint16_t port : ports) {
    auto c = ChannelConfig::connect("127.0.0.1", port);
    c.retry_backoff = std::chrono::milliseconds(10);
    c.connect_timeout = std::chrono::milliseconds(10'000);
    auto a = ChannelConfig::accept(port);
    a.connect_timeout = std::chrono::milliseconds(10'000);
    if (tweak) {
      tweak(c);
      tweak(a);
    }
    connect_side.push_back(std::move(c));
    accept_side.push_back(std::move(a));
  }
  std::optional<Mpw> first;
  std::optional<Mpw> second;
  run_both([&] { second.emplace(Mpw::init(accept_side)); },
           [&] { first.emplace(Mpw::init(connect_side)); });
  return LoopbackPair{std::move(*first), std::move(*second)};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Process::Process(const std::string& exe, const std::vector<std::string>& args,
                 const std::string& output) {
  std::vector<std::string> storage;
  storage.push_back(exe);
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t actions;
  ::posix_spawn_file_actions_init(&actions);
  if (!output.empty()) {
    ::posix_spawn_file_actions_addopen(&actions, 1, output.c_str(), O_WRONLY | O_CREAT | O_TRUNC,
                                       0644);
    ::posix_spawn_file_actions_adddup2(&actions, 1, 2);
  }
  pid_t pid = 0;
  const int rc = ::posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv.data(), environ);
  ::posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw std::runtime_error("posix_spawn failed for " + exe);
  pid_ = pid;
}

Process::Process(Process&& other) noexcept
    : pid_(std::exchange(other.pid_, -1)), status_(other.status_) {}

Process::~Process() {
  if (pid_ > 0 && !status_) {
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::optional<int> Process::wait(std::chrono::milliseconds timeout) {
  if (status_) return status_;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    int status = 0;
    const pid_t rc = ::waitpid(pid_, &status, WNOHANG);
    if (rc == pid_) {
      status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
      return status_;
    }
    if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

void Process::signal(int sig) {
  if (pid_ > 0 && !status_) ::kill(pid_, sig);
}

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mpwide-tests";
  std::filesystem::create_directories(dir);
  return (dir / (std::to_string(::getpid()) + "-" + name)).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mpw::test
