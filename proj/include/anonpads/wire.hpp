#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace anonpads {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Thrown when a message cannot be encoded (field out of range, list too long).
class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme : std::uint8_t { direct = 0, socks = 1, emu = 2 };

const char* to_string(Scheme s);
std::optional<Scheme> parse_scheme(std::string_view text);

/// Where a process can be contacted. For socks the host is usually an onion
/// name; for emu it is an opaque "anon:<token>" handle.
struct Endpoint {
  Scheme scheme = Scheme::direct;
  std::string host;
  std::uint16_t port = 0;

  bool operator==(const Endpoint&) const = default;

  /// Throws std::invalid_argument when host is empty, longer than 255 bytes
  /// or port is zero.
  void validate() const;
  std::string to_string() const;
};

/// Parses "scheme://host:port" or "host:port" (scheme then defaults to
/// `fallback`). The port is taken after the last colon so "anon:tok:7" works.
Endpoint parse_endpoint(std::string_view text, Scheme fallback = Scheme::direct);

struct LpIdentity {
  std::uint32_t lp_id = 0;
  Endpoint endpoint;
  bool operator==(const LpIdentity&) const = default;
};

struct PositionEntry {
  std::uint32_t entity_id = 0;
  double x = 0.0;
  double y = 0.0;
  bool operator==(const PositionEntry&) const = default;
};

struct PingPair {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  bool operator==(const PingPair&) const = default;
  auto operator<=>(const PingPair&) const = default;
};

struct Register {
  Endpoint listen_endpoint;
  bool operator==(const Register&) const = default;
};
struct RegisterAck {
  std::uint32_t lp_id = 0;
  std::uint32_t total_lps = 0;
  bool operator==(const RegisterAck&) const = default;
};
struct Roster {
  std::vector<LpIdentity> entries;
  bool operator==(const Roster&) const = default;
};
struct Hello {
  std::uint32_t lp_id = 0;
  bool operator==(const Hello&) const = default;
};
struct PositionDigest {
  std::uint64_t step = 0;
  std::vector<PositionEntry> entries;
  bool operator==(const PositionDigest&) const = default;
};
struct PingBatch {
  std::uint64_t step = 0;
  std::vector<PingPair> pairs;
  bool operator==(const PingBatch&) const = default;
};
struct StepEnd {
  std::uint64_t step = 0;
  std::uint32_t lp_id = 0;
  std::uint32_t sent_count = 0;
  bool operator==(const StepEnd&) const = default;
};
struct Migrate {
  std::uint64_t step = 0;
  Bytes entity_blob;
  bool operator==(const Migrate&) const = default;
};
struct MigrateNotice {
  std::uint64_t step = 0;
  std::uint32_t entity_id = 0;
  std::uint32_t new_lp = 0;
  bool operator==(const MigrateNotice&) const = default;
};
struct Ack {
  std::uint32_t cumulative_seq = 0;
  bool operator==(const Ack&) const = default;
};

using Message = std::variant<Register, RegisterAck, Roster, Hello, PositionDigest,
                             PingBatch, StepEnd, Migrate, MigrateNotice, Ack>;

enum class MsgType : std::uint8_t {
  register_lp = 0x01,
  register_ack = 0x02,
  roster = 0x03,
  hello = 0x04,
  position_digest = 0x05,
  ping_batch = 0x06,
  step_end = 0x07,
  migrate = 0x08,
  migrate_notice = 0x09,
  ack = 0x0A,
};

MsgType type_of(const Message& m);
const char* type_name(MsgType t);

inline constexpr std::uint8_t kMagic0 = 0xA5;
inline constexpr std::uint8_t kMagic1 = 0x51;
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 8;
inline constexpr std::uint32_t kMaxBodyLen = 16u * 1024u * 1024u;
inline constexpr std::size_t kMaxListEntries = 1u << 16;

Bytes encode_frame(const Message& msg);
/// Appends the encoded frame to `out`; returns the number of bytes written.
std::size_t encode_frame_into(const Message& msg, Bytes& out);

struct Decoded {
  Message message;
  std::size_t consumed = 0;
};
struct NeedMoreBytes {
  std::size_t have = 0;
};
struct MalformedFrame {
  std::string reason;
};
using DecodeResult = std::variant<Decoded, NeedMoreBytes, MalformedFrame>;

/// Decodes the first frame at the start of `bytes`.
DecodeResult decode_frame(ByteView bytes);

/// Incremental decoder for a byte stream. Feed arbitrary chunks, then drain
/// complete messages with next(). A malformed frame poisons the decoder.
class FrameDecoder {
 public:
  void feed(ByteView chunk);
  /// Returns the next complete message or nullopt if more bytes are needed.
  /// Throws std::runtime_error once the stream is malformed.
  std::optional<Message> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  Bytes buf_;
  std::size_t pos_ = 0;
  std::optional<std::string> error_;
};

}  // namespace anonpads
