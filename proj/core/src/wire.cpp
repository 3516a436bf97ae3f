#include "mpw/wire.hpp"

#include <algorithm>
#include <string>

#include "mpw/error.hpp"

namespace mpw {

const char* to_string(FrameKind kind) noexcept {
  switch (kind) {
    case FrameKind::kData: return "Data";
    case FrameKind::kBarrier: return "Barrier";
    case FrameKind::kHello: return "Hello";
    case FrameKind::kClose: return "Close";
  }
  return "Unknown";
}

void store_be64(std::span<std::byte, 8> out, std::uint64_t value) noexcept {
  for (int i = 7; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<std::byte>(value & 0xff);
    value >>= 8;
  }
}

std::uint64_t load_be64(std::span<const std::byte, 8> in) noexcept {
  std::uint64_t value = 0;
  for (std::byte b : in) value = (value << 8) | std::to_integer<std::uint64_t>(b);
  return value;
}

namespace {

bool known_kind(std::uint8_t raw) { return raw <= static_cast<std::uint8_t>(FrameKind::kClose); }

void check_length_for_kind(FrameKind kind, std::uint64_t len) {
  if (len > kMaxPayloadLen) {
    throw Error(Errc::kLengthOverCap, "payload length " + std::to_string(len) + " exceeds 2^40")
        .with_sizes(len, kMaxPayloadLen);
  }
  switch (kind) {
    case FrameKind::kBarrier:
    case FrameKind::kClose:
      if (len != 0) {
        throw Error(Errc::kMalformedFrame,
                    std::string(to_string(kind)) + " frame with non-empty payload");
      }
      break;
    case FrameKind::kHello:
      if (len != kHelloPayloadSize) {
        throw Error(Errc::kMalformedFrame,
                    "Hello payload must be 10 bytes, got " + std::to_string(len));
      }
      break;
    case FrameKind::kData:
      break;
  }
}

}  // namespace

HeaderBytes encode_header(FrameKind kind, std::uint64_t payload_len) {
  check_length_for_kind(kind, payload_len);
  HeaderBytes out{};
  out[0] = std::byte{kWireVersion};
  out[1] = static_cast<std::byte>(kind);
  store_be64(std::span<std::byte, 8>(out.data() + 2, 8), payload_len);
  return out;
}

FrameHeader decode_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kFrameHeaderSize) {
    throw Error(Errc::kTruncated, "header needs 10 bytes, got " + std::to_string(bytes.size()));
  }
  const auto version = std::to_integer<std::uint8_t>(bytes[0]);
  if (version != kWireVersion) {
    throw Error(Errc::kVersionMismatch, "wire version " + std::to_string(version));
  }
  const auto raw_kind = std::to_integer<std::uint8_t>(bytes[1]);
  if (!known_kind(raw_kind)) {
    throw Error(Errc::kUnknownKind, "frame kind " + std::to_string(raw_kind));
  }
  FrameHeader header;
  header.version = version;
  header.kind = static_cast<FrameKind>(raw_kind);
  header.payload_len = load_be64(bytes.subspan<2, 8>());
  check_length_for_kind(header.kind, header.payload_len);
  return header;
}

std::vector<std::byte> encode_frame(FrameKind kind, std::span<const std::byte> payload) {
  const HeaderBytes header = encode_header(kind, payload.size());
  std::vector<std::byte> out;
  out.reserve(kFrameHeaderSize + payload.size());
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Frame decode_frame(std::span<const std::byte> bytes) {
  const FrameHeader header = decode_header(bytes);
  const std::uint64_t available = bytes.size() - kFrameHeaderSize;
  if (available < header.payload_len) {
    throw Error(Errc::kTruncated, "payload needs " + std::to_string(header.payload_len) +
                                      " bytes, got " + std::to_string(available));
  }
  if (available > header.payload_len) {
    throw Error(Errc::kMalformedFrame,
                std::to_string(available - header.payload_len) + " trailing bytes after frame");
  }
  const auto payload = bytes.subspan(kFrameHeaderSize);
  return Frame{header.kind, std::vector<std::byte>(payload.begin(), payload.end())};
}

}  // namespace mpw
