#include "anonpads/wire.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <type_traits>

namespace anonpads {

namespace {

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(ByteView bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }

  void count(std::size_t n) {
    if (n > kMaxListEntries) throw EncodeError("list of " + std::to_string(n) + " entries exceeds 65536");
    u32(static_cast<std::uint32_t>(n));
  }

  void endpoint(const Endpoint& ep) {
    if (ep.host.empty() || ep.host.size() > 255) throw EncodeError("endpoint host must be 1..255 bytes");
    u8(static_cast<std::uint8_t>(ep.scheme));
    u8(static_cast<std::uint8_t>(ep.host.size()));
    raw({reinterpret_cast<const std::uint8_t*>(ep.host.data()), ep.host.size()});
    u16(ep.port);
  }

 private:
  Bytes& out_;
};

struct BodyError {
  std::string reason;
};

class Reader {
 public:
  explicit Reader(ByteView body) : body_(body) {}

  void need(std::size_t n) const {
    if (body_.size() - pos_ < n) throw BodyError{"body truncated"};
  }
  std::uint8_t u8() {
    need(1);
    return body_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>((body_[pos_] << 8) | body_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | body_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | body_[pos_ + i];
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  std::size_t count(std::size_t entry_size) {
    std::uint32_t n = u32();
    if (n > kMaxListEntries) throw BodyError{"list count exceeds 65536"};
    need(static_cast<std::size_t>(n) * entry_size);
    return n;
  }

  Endpoint endpoint() {
    Endpoint ep;
    std::uint8_t scheme = u8();
    if (scheme > static_cast<std::uint8_t>(Scheme::emu)) throw BodyError{"unknown endpoint scheme"};
    ep.scheme = static_cast<Scheme>(scheme);
    std::uint8_t len = u8();
    if (len == 0) throw BodyError{"empty endpoint host"};
    need(len);
    ep.host.assign(reinterpret_cast<const char*>(body_.data() + pos_), len);
    pos_ += len;
    ep.port = u16();
    if (ep.port == 0) throw BodyError{"endpoint port is zero"};
    return ep;
  }

  Bytes blob(std::size_t n) {
    need(n);
    Bytes out(body_.begin() + static_cast<std::ptrdiff_t>(pos_), body_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  void finish() const {
    if (pos_ != body_.size()) throw BodyError{"trailing bytes in body"};
  }

 private:
  ByteView body_;
  std::size_t pos_ = 0;
};

void write_body(Writer& w, const Message& msg) {
  std::visit(
      [&w](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Register>) {
          w.endpoint(m.listen_endpoint);
        } else if constexpr (std::is_same_v<T, RegisterAck>) {
          w.u32(m.lp_id);
          w.u32(m.total_lps);
        } else if constexpr (std::is_same_v<T, Roster>) {
          w.count(m.entries.size());
          for (const auto& e : m.entries) {
            w.u32(e.lp_id);
            w.endpoint(e.endpoint);
          }
        } else if constexpr (std::is_same_v<T, Hello>) {
          w.u32(m.lp_id);
        } else if constexpr (std::is_same_v<T, PositionDigest>) {
          w.u64(m.step);
          w.count(m.entries.size());
          for (const auto& e : m.entries) {
            w.u32(e.entity_id);
            w.f64(e.x);
            w.f64(e.y);
          }
        } else if constexpr (std::is_same_v<T, PingBatch>) {
          w.u64(m.step);
          w.count(m.pairs.size());
          for (const auto& p : m.pairs) {
            w.u32(p.src);
            w.u32(p.dst);
          }
        } else if constexpr (std::is_same_v<T, StepEnd>) {
          w.u64(m.step);
          w.u32(m.lp_id);
          w.u32(m.sent_count);
        } else if constexpr (std::is_same_v<T, Migrate>) {
          w.u64(m.step);
          if (m.entity_blob.size() > kMaxBodyLen - 12) throw EncodeError("entity blob too large");
          w.u32(static_cast<std::uint32_t>(m.entity_blob.size()));
          w.raw(m.entity_blob);
        } else if constexpr (std::is_same_v<T, MigrateNotice>) {
          w.u64(m.step);
          w.u32(m.entity_id);
          w.u32(m.new_lp);
        } else if constexpr (std::is_same_v<T, Ack>) {
          w.u32(m.cumulative_seq);
        }
      },
      msg);
}

Message read_body(MsgType type, Reader& r) {
  switch (type) {
    case MsgType::register_lp:
      return Register{r.endpoint()};
    case MsgType::register_ack: {
      RegisterAck m;
      m.lp_id = r.u32();
      m.total_lps = r.u32();
      return m;
    }
    case MsgType::roster: {
      Roster m;
      std::size_t n = r.count(4 + 4);
      m.entries.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        LpIdentity id;
        id.lp_id = r.u32();
        id.endpoint = r.endpoint();
        m.entries.push_back(std::move(id));
      }
      return m;
    }
    case MsgType::hello:
      return Hello{r.u32()};
    case MsgType::position_digest: {
      PositionDigest m;
      m.step = r.u64();
      std::size_t n = r.count(20);
      m.entries.resize(n);
      for (auto& e : m.entries) {
        e.entity_id = r.u32();
        e.x = r.f64();
        e.y = r.f64();
      }
      return m;
    }
    case MsgType::ping_batch: {
      PingBatch m;
      m.step = r.u64();
      std::size_t n = r.count(8);
      m.pairs.resize(n);
      for (auto& p : m.pairs) {
        p.src = r.u32();
        p.dst = r.u32();
      }
      return m;
    }
    case MsgType::step_end: {
      StepEnd m;
      m.step = r.u64();
      m.lp_id = r.u32();
      m.sent_count = r.u32();
      return m;
    }
    case MsgType::migrate: {
      Migrate m;
      m.step = r.u64();
      std::uint32_t len = r.u32();
      m.entity_blob = r.blob(len);
      return m;
    }
    case MsgType::migrate_notice: {
      MigrateNotice m;
      m.step = r.u64();
      m.entity_id = r.u32();
      m.new_lp = r.u32();
      return m;
    }
    case MsgType::ack:
      return Ack{r.u32()};
  }
  throw BodyError{"unknown msg_type"};
}

bool known_type(std::uint8_t t) { return t >= 0x01 && t <= 0x0A; }

}  // namespace

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::direct:
      return "direct";
    case Scheme::socks:
      return "socks";
    case Scheme::emu:
      return "emu";
  }
  return "?";
}

std::optional<Scheme> parse_scheme(std::string_view text) {
  if (text == "direct" || text == "tcp") return Scheme::direct;
  if (text == "socks" || text == "tor") return Scheme::socks;
  if (text == "emu") return Scheme::emu;
  return std::nullopt;
}

void Endpoint::validate() const {
  if (host.empty()) throw std::invalid_argument("endpoint host is empty");
  if (host.size() > 255) throw std::invalid_argument("endpoint host longer than 255 bytes");
  if (port == 0) throw std::invalid_argument("endpoint port must be in 1..65535");
}

std::string Endpoint::to_string() const {
  return std::string(anonpads::to_string(scheme)) + "://" + host + ":" + std::to_string(port);
}

Endpoint parse_endpoint(std::string_view text, Scheme fallback) {
  Endpoint ep;
  ep.scheme = fallback;
  auto sep = text.find("://");
  if (sep != std::string_view::npos) {
    auto scheme = parse_scheme(text.substr(0, sep));
    if (!scheme) throw std::invalid_argument("unknown endpoint scheme in '" + std::string(text) + "'");
    ep.scheme = *scheme;
    text.remove_prefix(sep + 3);
  }
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("endpoint '" + std::string(text) + "' has no port");
  ep.host = std::string(text.substr(0, colon));
  auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535)
    throw std::invalid_argument("bad endpoint port '" + std::string(port_text) + "'");
  ep.port = static_cast<std::uint16_t>(port);
  ep.validate();
  return ep;
}

MsgType type_of(const Message& m) {
  return static_cast<MsgType>(m.index() + 1);
}

const char* type_name(MsgType t) {
  switch (t) {
    case MsgType::register_lp:
      return "Register";
    case MsgType::register_ack:
      return "RegisterAck";
    case MsgType::roster:
      return "Roster";
    case MsgType::hello:
      return "Hello";
    case MsgType::position_digest:
      return "PositionDigest";
    case MsgType::ping_batch:
      return "PingBatch";
    case MsgType::step_end:
      return "StepEnd";
    case MsgType::migrate:
      return "Migrate";
    case MsgType::migrate_notice:
      return "MigrateNotice";
    case MsgType::ack:
      return "Ack";
  }
  return "?";
}

std::size_t encode_frame_into(const Message& msg, Bytes& out) {
  const std::size_t start = out.size();
  Writer w(out);
  w.u8(kMagic0);
  w.u8(kMagic1);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(type_of(msg)));
  w.u32(0);  // patched below
  try {
    write_body(w, msg);
  } catch (...) {
    out.resize(start);
    throw;
  }
  const std::size_t body_len = out.size() - start - kHeaderSize;
  if (body_len > kMaxBodyLen) {
    out.resize(start);
    throw EncodeError("frame body exceeds 16 MiB");
  }
  for (int i = 0; i < 4; ++i)
    out[start + 4 + i] = static_cast<std::uint8_t>(body_len >> (24 - 8 * i));
  return out.size() - start;
}

Bytes encode_frame(const Message& msg) {
  Bytes out;
  encode_frame_into(msg, out);
  return out;
}

DecodeResult decode_frame(ByteView bytes) {
  // Reject bad prefixes as early as possible, even before the header is whole.
  if (!bytes.empty() && bytes[0] != kMagic0) return MalformedFrame{"bad magic"};
  if (bytes.size() >= 2 && bytes[1] != kMagic1) return MalformedFrame{"bad magic"};
  if (bytes.size() >= 3 && bytes[2] != kVersion) return MalformedFrame{"unsupported version"};
  if (bytes.size() >= 4 && !known_type(bytes[3])) return MalformedFrame{"unknown msg_type"};
  if (bytes.size() < kHeaderSize) return NeedMoreBytes{bytes.size()};

  std::uint32_t body_len = 0;
  for (int i = 4; i < 8; ++i) body_len = (body_len << 8) | bytes[i];
  if (body_len > kMaxBodyLen) return MalformedFrame{"body_len exceeds 16 MiB"};
  if (bytes.size() - kHeaderSize < body_len) return NeedMoreBytes{bytes.size()};

  Reader r(bytes.subspan(kHeaderSize, body_len));
  try {
    Message m = read_body(static_cast<MsgType>(bytes[3]), r);
    r.finish();
    return Decoded{std::move(m), kHeaderSize + body_len};
  } catch (const BodyError& e) {
    return MalformedFrame{e.reason};
  }
}

void FrameDecoder::feed(ByteView chunk) {
  if (pos_ > 0 && pos_ >= buf_.size() / 2) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  buf_.insert(buf_.end(), chunk.begin(), chunk.end());
}

std::optional<Message> FrameDecoder::next() {
  if (error_) throw std::runtime_error("malformed frame: " + *error_);
  auto result = decode_frame(ByteView(buf_).subspan(pos_));
  if (auto* d = std::get_if<Decoded>(&result)) {
    pos_ += d->consumed;
    return std::move(d->message);
  }
  if (auto* bad = std::get_if<MalformedFrame>(&result)) {
    error_ = bad->reason;
    throw std::runtime_error("malformed frame: " + bad->reason);
  }
  return std::nullopt;
}

}  // namespace anonpads
