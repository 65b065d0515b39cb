#include "qkd/wire.hpp"

#include <algorithm>
#include <cstring>

namespace qkd::wire {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) u8(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) u8(static_cast<std::uint8_t>(v >> s));
  }
  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      u8(static_cast<std::uint8_t>(v | 0x80));
      v >>= 7;
    }
    u8(static_cast<std::uint8_t>(v));
  }
  // Pad-length byte, then MSB-first packed bits.
  void bits(std::span<const std::uint8_t> b) {
    u8(static_cast<std::uint8_t>((8 - b.size() % 8) % 8));
    const auto packed = pack_msb(b);
    out_.insert(out_.end(), packed.begin(), packed.end());
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void count(std::size_t n) {
    if (n > 0xFFFFFFFFULL) throw EncodeError("element count exceeds u32");
    u32(static_cast<std::uint32_t>(n));
  }
  void increasing(const std::vector<std::uint64_t>& values) {
    count(values.size());
    std::uint64_t prev = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i > 0 && values[i] <= prev) throw EncodeError("index list must be strictly increasing");
      varint(i == 0 ? values[i] : values[i] - prev);
      prev = values[i];
    }
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

struct Malformed {};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() {
    if (pos_ >= data_.size()) throw Malformed{};
    return data_[pos_++];
  }
  std::uint16_t u16() {
    std::uint16_t v = u8();
    return static_cast<std::uint16_t>((v << 8) | u8());
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | u8();
    return v;
  }
  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      const std::uint8_t b = u8();
      if (shift == 63 && (b & 0x7E)) throw Malformed{};
      v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
      if (!(b & 0x80)) return v;
    }
    throw Malformed{};
  }
  // Bit string running to the end of the payload.
  Bits trailing_bits() {
    const std::uint8_t pad = u8();
    const std::size_t n_bytes = remaining();
    if (pad > 7 || (n_bytes == 0 && pad != 0)) throw Malformed{};
    const auto body = data_.subspan(pos_, n_bytes);
    pos_ += n_bytes;
    if (pad && (body.back() & ((1U << pad) - 1))) throw Malformed{};
    return unpack_msb(body, n_bytes * 8 - pad);
  }
  std::vector<std::uint64_t> increasing() {
    const std::uint32_t n = u32();
    // Every varint needs at least one byte.
    if (n > remaining()) throw Malformed{};
    std::vector<std::uint64_t> values;
    values.reserve(n);
    std::uint64_t prev = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint64_t d = varint();
      if (i == 0) {
        prev = d;
      } else {
        if (d == 0 || d > ~prev) throw Malformed{};
        prev += d;
      }
      values.push_back(prev);
    }
    return values;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  void finish() const {
    if (pos_ != data_.size()) throw Malformed{};
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool valid_reason(std::uint8_t r) { return r >= 0x01 && r <= 0x0C; }

std::vector<std::uint8_t> encode_payload(const Message& msg) {
  Writer w;
  std::visit(Overloaded{
                 [&](const Hello& m) {
                   w.u16(m.version);
                   w.u64(m.params_hash);
                 },
                 [&](const Detections& m) {
                   if (m.bases.size() != m.cycles.size()) throw EncodeError("detections: one basis bit per cycle");
                   w.increasing(m.cycles);
                   w.bits(m.bases);
                 },
                 [&](const BasisMatch& m) { w.bits(m.kept); },
                 [&](const SampleRequest& m) { w.increasing(m.indices); },
                 [&](const SampleBits& m) { w.bits(m.bits); },
                 [&](const CascadeShuffle& m) {
                   w.u8(m.pass);
                   w.u64(m.seed);
                 },
                 [&](const CascadeParityReq& m) {
                   w.count(m.ranges.size());
                   for (const auto& r : m.ranges) {
                     if (r.pass > 0xFF) throw EncodeError("cascade pass exceeds one byte");
                     w.u8(static_cast<std::uint8_t>(r.pass));
                     w.varint(r.start);
                     w.varint(r.length);
                   }
                 },
                 [&](const CascadeParityResp& m) { w.bits(m.parities); },
                 [&](const PaSeed& m) {
                   w.u32(m.m);
                   w.bits(m.seed);
                 },
                 [&](const VerifyHash& m) {
                   if (m.hash >> kVerifyHashBits) throw EncodeError("verify hash wider than 50 bits");
                   w.u64(m.salt);
                   w.u64(m.hash);
                 },
                 [&](const Abort& m) {
                   if (!valid_reason(static_cast<std::uint8_t>(m.reason))) throw EncodeError("unknown abort reason");
                   w.u8(static_cast<std::uint8_t>(m.reason));
                 },
                 [&](const Done& m) {
                   if (m.digest.empty()) throw EncodeError("DONE requires a non-empty digest");
                   w.bytes(m.digest);
                 },
             },
             msg);
  return w.take();
}

Message parse(MsgType type, Reader& r) {
  switch (type) {
    case MsgType::hello: {
      Hello m;
      m.version = r.u16();
      m.params_hash = r.u64();
      return m;
    }
    case MsgType::detections: {
      Detections m;
      m.cycles = r.increasing();
      m.bases = r.trailing_bits();
      if (m.bases.size() != m.cycles.size()) throw Malformed{};
      return m;
    }
    case MsgType::basis_match:
      return BasisMatch{r.trailing_bits()};
    case MsgType::sample_request:
      return SampleRequest{r.increasing()};
    case MsgType::sample_bits:
      return SampleBits{r.trailing_bits()};
    case MsgType::cascade_shuffle: {
      CascadeShuffle m;
      m.pass = r.u8();
      m.seed = r.u64();
      return m;
    }
    case MsgType::cascade_parity_req: {
      CascadeParityReq m;
      const std::uint32_t n = r.u32();
      if (n > r.remaining() / 3) throw Malformed{};
      m.ranges.reserve(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        ParityQuery q;
        q.pass = r.u8();
        q.start = r.varint();
        q.length = r.varint();
        m.ranges.push_back(q);
      }
      return m;
    }
    case MsgType::cascade_parity_resp:
      return CascadeParityResp{r.trailing_bits()};
    case MsgType::pa_seed: {
      PaSeed m;
      m.m = r.u32();
      m.seed = r.trailing_bits();
      return m;
    }
    case MsgType::verify_hash: {
      VerifyHash m;
      m.salt = r.u64();
      m.hash = r.u64();
      if (m.hash >> kVerifyHashBits) throw Malformed{};
      return m;
    }
    case MsgType::abort: {
      const std::uint8_t reason = r.u8();
      if (!valid_reason(reason)) throw Malformed{};
      return Abort{static_cast<AbortReason>(reason)};
    }
    case MsgType::done: {
      if (r.remaining() == 0) throw Malformed{};
      Done m;
      while (r.remaining()) m.digest.push_back(r.u8());
      return m;
    }
  }
  throw Malformed{};
}

bool known_type(std::uint8_t t) { return t >= 0x01 && t <= 0x0C; }

}  // namespace

std::string_view to_string(AbortReason reason) {
  switch (reason) {
    case AbortReason::protocol_error: return "protocol_error";
    case AbortReason::version_mismatch: return "version_mismatch";
    case AbortReason::config_mismatch: return "config_mismatch";
    case AbortReason::no_bits: return "no_bits";
    case AbortReason::insufficient_bits: return "insufficient_bits";
    case AbortReason::qber_threshold: return "qber_threshold";
    case AbortReason::reconciliation_failed: return "reconciliation_failed";
    case AbortReason::no_secure_bits: return "no_secure_bits";
    case AbortReason::timeout: return "timeout";
    case AbortReason::channel_closed: return "channel_closed";
    case AbortReason::malformed_frame: return "malformed_frame";
    case AbortReason::digest_mismatch: return "digest_mismatch";
  }
  return "unknown";
}

std::string_view to_string(MsgType type) {
  switch (type) {
    case MsgType::hello: return "HELLO";
    case MsgType::detections: return "DETECTIONS";
    case MsgType::basis_match: return "BASIS_MATCH";
    case MsgType::sample_request: return "SAMPLE_REQUEST";
    case MsgType::sample_bits: return "SAMPLE_BITS";
    case MsgType::cascade_shuffle: return "CASCADE_SHUFFLE";
    case MsgType::cascade_parity_req: return "CASCADE_PARITY_REQ";
    case MsgType::cascade_parity_resp: return "CASCADE_PARITY_RESP";
    case MsgType::pa_seed: return "PA_SEED";
    case MsgType::verify_hash: return "VERIFY_HASH";
    case MsgType::abort: return "ABORT";
    case MsgType::done: return "DONE";
  }
  return "UNKNOWN";
}

std::string_view to_string(DecodeError error) {
  switch (error) {
    case DecodeError::bad_magic: return "bad_magic";
    case DecodeError::truncated: return "truncated";
    case DecodeError::oversize: return "oversize";
    case DecodeError::unknown_type: return "unknown_type";
    case DecodeError::malformed: return "malformed";
  }
  return "unknown";
}

MsgType type_of(const Message& msg) { return static_cast<MsgType>(msg.index() + 1); }

std::vector<std::uint8_t> encode_frame(const Message& msg) {
  const auto payload = encode_payload(msg);
  if (payload.size() > kMaxPayload) throw EncodeError("payload exceeds 2^24 bytes");
  Writer w;
  w.bytes(kMagic);
  w.u8(static_cast<std::uint8_t>(type_of(msg)));
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload);
  return w.take();
}

std::variant<Header, DecodeError> decode_header(std::span<const std::uint8_t> bytes) {
  const std::size_t magic_seen = std::min<std::size_t>(bytes.size(), 4);
  if (!std::equal(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(magic_seen), kMagic)) {
    return DecodeError::bad_magic;
  }
  if (bytes.size() < kHeaderSize) return DecodeError::truncated;
  Header h;
  h.type = bytes[4];
  h.payload_len = (std::uint32_t{bytes[5]} << 24) | (std::uint32_t{bytes[6]} << 16) | (std::uint32_t{bytes[7]} << 8) |
                  std::uint32_t{bytes[8]};
  if (!known_type(h.type)) return DecodeError::unknown_type;
  if (h.payload_len > kMaxPayload) return DecodeError::oversize;
  return h;
}

std::variant<Message, DecodeError> decode_payload(MsgType type, std::span<const std::uint8_t> payload) {
  try {
    Reader r(payload);
    Message m = parse(type, r);
    r.finish();
    return m;
  } catch (const Malformed&) {
    return DecodeError::malformed;
  }
}

Decoded decode_frame(std::span<const std::uint8_t> bytes) {
  const auto header = decode_header(bytes);
  if (const auto* err = std::get_if<DecodeError>(&header)) return {*err, 0};
  const Header h = std::get<Header>(header);
  if (bytes.size() - kHeaderSize < h.payload_len) return {DecodeError::truncated, 0};
  auto result = decode_payload(static_cast<MsgType>(h.type), bytes.subspan(kHeaderSize, h.payload_len));
  const std::size_t consumed = std::holds_alternative<Message>(result) ? kHeaderSize + h.payload_len : 0;
  return {std::move(result), consumed};
}

}  // namespace qkd::wire
