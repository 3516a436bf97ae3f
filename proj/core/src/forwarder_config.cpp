#include <charconv>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "mpw/error.hpp"
#include "mpw/relay.hpp"

namespace mpw {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view text, std::size_t line, const std::string& key) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError(line, key, "expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

template <class T>
T parse_positive(std::string_view text, std::size_t line, const std::string& key) {
  const T value = parse_number<T>(text, line, key);
  if (value <= 0) throw ConfigError(line, key, "must be positive");
  return value;
}

std::vector<std::uint16_t> parse_ports(std::string_view text, std::size_t line,
                                       const std::string& key) {
  std::vector<std::uint16_t> ports;
  std::set<std::uint16_t> seen;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    const auto port = parse_number<std::uint32_t>(item, line, key);
    if (port == 0 || port > 65535) throw ConfigError(line, key, "port out of range 1..65535");
    if (!seen.insert(static_cast<std::uint16_t>(port)).second) {
      throw ConfigError(line, key, "duplicate port " + std::to_string(port));
    }
    ports.push_back(static_cast<std::uint16_t>(port));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (ports.empty()) throw ConfigError(line, key, "needs at least one port");
  return ports;
}

void assign_side_key(ForwarderSide& side, std::string_view field, std::string_view value,
                     std::size_t line, const std::string& key) {
  if (field == "host") {
    if (value.empty()) throw ConfigError(line, key, "host must not be empty");
    side.host = std::string(value);
  } else if (field == "ports") {
    side.ports = parse_ports(value, line, key);
  } else if (field == "send_buffer") {
    side.send_buffer_bytes = parse_positive<std::size_t>(value, line, key);
  } else if (field == "recv_buffer") {
    side.recv_buffer_bytes = parse_positive<std::size_t>(value, line, key);
  } else if (field == "pace") {
    side.pace_bytes_per_sec = parse_positive<std::uint64_t>(value, line, key);
  } else if (field == "connect_timeout_ms") {
    side.connect_timeout_ms = parse_positive<std::int64_t>(value, line, key);
  } else if (field == "retry_backoff_ms") {
    side.retry_backoff_ms = parse_positive<std::int64_t>(value, line, key);
  } else {
    throw ConfigError(line, key, "unknown key");
  }
}

}  // namespace

ConfigError::ConfigError(std::size_t line, std::string key, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + key + ": " + message),
      line_(line),
      key_(std::move(key)) {}

std::vector<ChannelConfig> ForwarderSide::channel_configs() const {
  std::vector<ChannelConfig> out;
  for (std::size_t i = 0; i < ports.size(); ++i) {
    ChannelConfig config =
        host.empty() ? ChannelConfig::accept(ports[i]) : ChannelConfig::connect(host, ports[i]);
    config.send_buffer_bytes = send_buffer_bytes;
    config.recv_buffer_bytes = recv_buffer_bytes;
    config.pace_bytes_per_sec = pace_bytes_per_sec;
    if (connect_timeout_ms) config.connect_timeout = std::chrono::milliseconds(*connect_timeout_ms);
    if (retry_backoff_ms) config.retry_backoff = std::chrono::milliseconds(*retry_backoff_ms);
    config.link_index = i;
    out.push_back(std::move(config));
  }
  return out;
}

ForwarderConfig parse_forwarder_config(std::istream& in) {
  ForwarderConfig config;
  std::map<std::string, std::size_t> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view text(raw);
    if (const auto hash = text.find('#'); hash != std::string_view::npos) {
      text = text.substr(0, hash);
    }
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(line, std::string(text), "expected 'key = value'");
    }
    const std::string key(trim(text.substr(0, eq)));
    const std::string_view value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(line, key, "empty key");
    if (const auto [it, fresh] = seen.emplace(key, line); !fresh) {
      throw ConfigError(line, key, "duplicate key (first set on line " +
                                       std::to_string(it->second) + ")");
    }
    if (key.starts_with("side_a.")) {
      assign_side_key(config.side_a, std::string_view(key).substr(7), value, line, key);
    } else if (key.starts_with("side_b.")) {
      assign_side_key(config.side_b, std::string_view(key).substr(7), value, line, key);
    } else if (key == "log_interval") {
      config.log_interval_sec = parse_positive<double>(value, line, key);
    } else {
      throw ConfigError(line, key, "unknown key");
    }
  }
  if (config.side_a.ports.empty()) throw ConfigError(line, "side_a.ports", "missing required key");
  if (config.side_b.ports.empty()) throw ConfigError(line, "side_b.ports", "missing required key");
  return config;
}

}  // namespace mpw
