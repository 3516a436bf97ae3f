#include "mpw/stripe.hpp"

#include "mpw/error.hpp"

namespace mpw {

StripeLayout stripe_layout(std::uint64_t total_len, std::size_t n_channels) {
  if (n_channels == 0) throw Error(Errc::kInvalidArgument, "stripe over zero channels");
  StripeLayout layout;
  layout.total_len = total_len;
  layout.chunks.reserve(n_channels);
  const std::uint64_t base = total_len / n_channels;
  const std::uint64_t extra = total_len % n_channels;
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < n_channels; ++i) {
    const std::uint64_t len = base + (i < extra ? 1 : 0);
    layout.chunks.push_back({offset, len});
    offset += len;
  }
  return layout;
}

}  // namespace mpw
