#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "qkd/bits.hpp"
#include "qkd/cascade.hpp"

namespace qkd::wire {

// Frame layout: "QKD1" | type (1 byte) | payload length (u32 big-endian) | payload.
inline constexpr std::uint8_t kMagic[4] = {0x51, 0x4B, 0x44, 0x31};
inline constexpr std::size_t kHeaderSize = 9;
inline constexpr std::uint32_t kMaxPayload = 1U << 24;

enum class MsgType : std::uint8_t {
  hello = 0x01,
  detections = 0x02,
  basis_match = 0x03,
  sample_request = 0x04,
  sample_bits = 0x05,
  cascade_shuffle = 0x06,
  cascade_parity_req = 0x07,
  cascade_parity_resp = 0x08,
  pa_seed = 0x09,
  verify_hash = 0x0A,
  abort = 0x0B,
  done = 0x0C,
};

enum class AbortReason : std::uint8_t {
  protocol_error = 0x01,
  version_mismatch = 0x02,
  config_mismatch = 0x03,
  no_bits = 0x04,
  insufficient_bits = 0x05,
  qber_threshold = 0x06,
  reconciliation_failed = 0x07,
  no_secure_bits = 0x08,
  timeout = 0x09,
  channel_closed = 0x0A,
  malformed_frame = 0x0B,
  digest_mismatch = 0x0C,
};

std::string_view to_string(AbortReason reason);
std::string_view to_string(MsgType type);

struct Hello {
  std::uint16_t version = 0;
  std::uint64_t params_hash = 0;
  friend bool operator==(const Hello&, const Hello&) = default;
};

/// Bob's detected cycles (strictly increasing) and his basis per detection.
struct Detections {
  std::vector<std::uint64_t> cycles;
  Bits bases;
  friend bool operator==(const Detections&, const Detections&) = default;
};

/// One bit per announced detection: 1 where the bases agree.
struct BasisMatch {
  Bits kept;
  friend bool operator==(const BasisMatch&, const BasisMatch&) = default;
};

/// Sifted-key positions to disclose, strictly increasing.
struct SampleRequest {
  std::vector<std::uint64_t> indices;
  friend bool operator==(const SampleRequest&, const SampleRequest&) = default;
};

struct SampleBits {
  Bits bits;
  friend bool operator==(const SampleBits&, const SampleBits&) = default;
};

/// Bob sends seed 0 to ask for a pass; Alice answers with her seed.
struct CascadeShuffle {
  std::uint8_t pass = 0;
  std::uint64_t seed = 0;
  friend bool operator==(const CascadeShuffle&, const CascadeShuffle&) = default;
};

struct CascadeParityReq {
  std::vector<ParityQuery> ranges;
  friend bool operator==(const CascadeParityReq&, const CascadeParityReq&) = default;
};

struct CascadeParityResp {
  Bits parities;
  friend bool operator==(const CascadeParityResp&, const CascadeParityResp&) = default;
};

struct PaSeed {
  std::uint32_t m = 0;
  Bits seed;
  friend bool operator==(const PaSeed&, const PaSeed&) = default;
};

/// hash holds a 50-bit value.
struct VerifyHash {
  std::uint64_t salt = 0;
  std::uint64_t hash = 0;
  friend bool operator==(const VerifyHash&, const VerifyHash&) = default;
};

struct Abort {
  AbortReason reason = AbortReason::protocol_error;
  friend bool operator==(const Abort&, const Abort&) = default;
};

/// digest must be non-empty.
struct Done {
  std::vector<std::uint8_t> digest;
  friend bool operator==(const Done&, const Done&) = default;
};

using Message = std::variant<Hello, Detections, BasisMatch, SampleRequest, SampleBits, CascadeShuffle,
                             CascadeParityReq, CascadeParityResp, PaSeed, VerifyHash, Abort, Done>;

MsgType type_of(const Message& msg);

enum class DecodeError : std::uint8_t { bad_magic, truncated, oversize, unknown_type, malformed };
std::string_view to_string(DecodeError error);

/// Raised by encode_frame for messages that cannot be put on the wire.
class EncodeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::vector<std::uint8_t> encode_frame(const Message& msg);

struct Header {
  std::uint8_t type = 0;
  std::uint32_t payload_len = 0;
};

/// Validates the fixed 9-byte header: magic, type, then length cap.
std::variant<Header, DecodeError> decode_header(std::span<const std::uint8_t> bytes);

/// Decodes a payload for an already validated header type.
std::variant<Message, DecodeError> decode_payload(MsgType type, std::span<const std::uint8_t> payload);

struct Decoded {
  std::variant<Message, DecodeError> result;
  std::size_t consumed = 0;  // bytes of the frame on success

  bool ok() const { return std::holds_alternative<Message>(result); }
  const Message& message() const { return std::get<Message>(result); }
  DecodeError error() const { return std::get<DecodeError>(result); }
};

/// Decodes one frame at the start of bytes.
Decoded decode_frame(std::span<const std::uint8_t> bytes);

}  // namespace qkd::wire
