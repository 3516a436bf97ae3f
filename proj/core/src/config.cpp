#include "mpw/config.hpp"

#include <algorithm>
#include <set>
#include <utility>

#include "mpw/error.hpp"

namespace mpw {

const char* to_string(Role role) noexcept {
  return role == Role::kAccept ? "accept" : "connect";
}

ChannelConfig ChannelConfig::connect(std::string host, std::uint16_t port) {
  ChannelConfig config;
  config.peer_host = std::move(host);
  config.port = port;
  config.role = Role::kConnect;
  return config;
}

ChannelConfig ChannelConfig::accept(std::uint16_t port) {
  ChannelConfig config;
  config.port = port;
  config.role = Role::kAccept;
  return config;
}

void ChannelConfig::validate() const {
  if (port == 0) throw Error(Errc::kInvalidConfig, "port must be in 1..65535");
  if (role == Role::kConnect && peer_host.empty()) {
    throw Error(Errc::kInvalidConfig, "peer_host is required for a connect channel");
  }
  if (role == Role::kAccept && !peer_host.empty()) {
    throw Error(Errc::kInvalidConfig, "peer_host must be empty for an accept channel");
  }
  if (send_buffer_bytes && *send_buffer_bytes == 0) {
    throw Error(Errc::kInvalidConfig, "send_buffer_bytes must be positive");
  }
  if (recv_buffer_bytes && *recv_buffer_bytes == 0) {
    throw Error(Errc::kInvalidConfig, "recv_buffer_bytes must be positive");
  }
  if (pace_bytes_per_sec && *pace_bytes_per_sec == 0) {
    throw Error(Errc::kInvalidConfig, "pace_bytes_per_sec must be positive");
  }
  if (connect_timeout.count() <= 0) {
    throw Error(Errc::kInvalidConfig, "connect_timeout_ms must be positive");
  }
  if (retry_backoff.count() <= 0) {
    throw Error(Errc::kInvalidConfig, "retry_backoff_ms must be positive");
  }
}

Path::Path(std::vector<ChannelId> channels) : channels_(std::move(channels)) {
  if (channels_.empty()) throw Error(Errc::kInvalidPath, "path must not be empty");
  std::set<ChannelId> seen;
  for (ChannelId id : channels_) {
    if (!seen.insert(id).second) {
      throw Error(Errc::kInvalidPath, "duplicate channel " + std::to_string(id.index) + " in path");
    }
  }
}

Path::Path(std::initializer_list<std::size_t> indices)
    : Path([&] {
        std::vector<ChannelId> ids;
        for (std::size_t i : indices) ids.push_back(ChannelId{i});
        return ids;
      }()) {}

Path Path::range(std::size_t first, std::size_t count) {
  std::vector<ChannelId> ids;
  ids.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ids.push_back(ChannelId{first + i});
  return Path(std::move(ids));
}

bool Path::intersects(const Path& other) const noexcept {
  return std::any_of(channels_.begin(), channels_.end(), [&](ChannelId id) {
    return std::find(other.channels_.begin(), other.channels_.end(), id) != other.channels_.end();
  });
}

}  // namespace mpw
