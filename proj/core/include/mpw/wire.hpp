#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mpw {

// Frame wire format (10-byte header, all integers big-endian):
// +---------+------+-------------+-----------------+
// | version | kind | payload_len | payload         |
// | 1 byte  | 1 b  | 8 bytes     | payload_len b   |
// +---------+------+-------------+-----------------+

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 10;
inline constexpr std::uint64_t kMaxPayloadLen = std::uint64_t{1} << 40;
inline constexpr std::size_t kHelloPayloadSize = 10;

enum class FrameKind : std::uint8_t {
  kData = 0,
  kBarrier = 1,
  kHello = 2,
  kClose = 3,
};

const char* to_string(FrameKind kind) noexcept;

struct FrameHeader {
  std::uint8_t version = kWireVersion;
  FrameKind kind = FrameKind::kData;
  std::uint64_t payload_len = 0;

  friend bool operator==(const FrameHeader&, const FrameHeader&) = default;
};

struct Frame {
  FrameKind kind = FrameKind::kData;
  std::vector<std::byte> payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

using HeaderBytes = std::array<std::byte, kFrameHeaderSize>;

/// Throws Error(kLengthOverCap) or Error(kMalformedFrame) if the length is not
/// legal for the kind.
HeaderBytes encode_header(FrameKind kind, std::uint64_t payload_len);

/// Parses the first 10 bytes of `bytes`. Checks, in order: truncation,
/// version, kind, length cap, kind-specific length rules.
FrameHeader decode_header(std::span<const std::byte> bytes);

std::vector<std::byte> encode_frame(FrameKind kind, std::span<const std::byte> payload);

/// Decodes exactly one frame; `bytes` must hold the header and the whole
/// payload. Trailing bytes are rejected as malformed.
Frame decode_frame(std::span<const std::byte> bytes);

// Big-endian helpers shared by the header and handshake codecs.
void store_be64(std::span<std::byte, 8> out, std::uint64_t value) noexcept;
std::uint64_t load_be64(std::span<const std::byte, 8> in) noexcept;

}  // namespace mpw
