#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mpw {

struct Chunk {
  std::uint64_t offset = 0;
  std::uint64_t len = 0;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Partition of one message across the channels of a path, in path order.
struct StripeLayout {
  std::uint64_t total_len = 0;
  std::vector<Chunk> chunks;

  friend bool operator==(const StripeLayout&, const StripeLayout&) = default;
};

/// Splits `total_len` bytes into `n_channels` contiguous chunks whose lengths
/// differ by at most one byte. The remainder goes to the lowest-indexed
/// channels, so both peers derive the same layout without negotiation.
/// Throws Error(kInvalidArgument) if `n_channels` is zero.
StripeLayout stripe_layout(std::uint64_t total_len, std::size_t n_channels);

}  // namespace mpw
