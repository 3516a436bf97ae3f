#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "mpw/link.hpp"
#include "mpw/mpw.hpp"

namespace mpw::testkit {

/// Pause in delivery once a direction's byte stream reaches `start_byte_offset`.
struct Stall {
  std::uint64_t start_byte_offset = 0;
  double duration_ms = 0.0;
};

/// Impairments applied to each direction of an in-process link pair.
///
/// Modelled at byte-stream level: a byte written at time t is readable at
/// max(t, wire free) + serialization (len * 8 / cap) + latency. Stalls push the
/// wire's free time forward; there is no loss or reordering.
struct ImpairmentProfile {
  double one_way_latency_ms = 0.0;
  std::optional<double> per_stream_cap_bits_per_sec;
  std::vector<Stall> stall_schedule;
  /// Both ends close once this many bytes (both directions combined) were sent.
  std::optional<std::uint64_t> disconnect_after_bytes;

  /// Throws Error(kInvalidConfig).
  void validate() const;
};

using LinkPair = std::pair<std::unique_ptr<Link>, std::unique_ptr<Link>>;

/// Two connected in-process link endpoints.
LinkPair impaired_pair(const ImpairmentProfile& profile = {});

/// Both ends of a channel set built from impaired pairs, handshaken. `first`
/// plays the Connect role, `second` the Accept role.
struct InstancePair {
  Mpw first;
  Mpw second;
};

/// One impaired link per profile; channel i of both instances shares link i.
/// `base` supplies pacing/buffer settings for both sides.
InstancePair connected_instances(const std::vector<ImpairmentProfile>& profiles,
                                 const ChannelConfig& base = {});

struct ScalingResult {
  std::size_t streams = 0;
  std::uint64_t msg_bytes = 0;
  double aggregate_bits_per_sec = 0.0;
  std::chrono::duration<double> elapsed{0.0};
  /// Set for an empty message, where throughput has no meaning.
  bool degenerate = false;
};

/// Sends `msg_bytes` striped over `n_streams` links, each capped at
/// `cap_bits_per_sec`, and reports payload bits over wall time.
ScalingResult capped_scaling_scenario(std::size_t n_streams, double cap_bits_per_sec,
                                      std::uint64_t msg_bytes = 4 * 1024 * 1024);

}  // namespace mpw::testkit
