#include "anonpads/reliability.hpp"

#include <algorithm>
#include <string>

namespace anonpads {

Bytes encode_segment(const Segment& s) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(s.kind));
  if (s.kind == Segment::Kind::ack) {
    encode_frame_into(Ack{s.seq}, out);
    return out;
  }
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(s.seq >> shift));
  out.insert(out.end(), s.frame.begin(), s.frame.end());
  return out;
}

std::optional<Segment> decode_segment(ByteView bytes) {
  if (bytes.empty()) return std::nullopt;
  Segment s;
  if (bytes[0] == static_cast<std::uint8_t>(Segment::Kind::ack)) {
    auto r = decode_frame(bytes.subspan(1));
    auto* d = std::get_if<Decoded>(&r);
    if (d == nullptr || d->consumed != bytes.size() - 1) return std::nullopt;
    auto* ack = std::get_if<Ack>(&d->message);
    if (ack == nullptr) return std::nullopt;
    s.kind = Segment::Kind::ack;
    s.seq = ack->cumulative_seq;
    return s;
  }
  if (bytes[0] != static_cast<std::uint8_t>(Segment::Kind::data) || bytes.size() < 5) return std::nullopt;
  s.kind = Segment::Kind::data;
  for (std::size_t i = 1; i < 5; ++i) s.seq = (s.seq << 8) | bytes[i];
  s.frame.assign(bytes.begin() + 5, bytes.end());
  return s;
}

ReliabilityState::ReliabilityState(ReliabilityConfig cfg)
    : cfg_(cfg),
      rtt_est_ms_(cfg.initial_rtt_ms),
      rto_ms_(std::max(cfg.min_rto_ms, cfg.rto_factor * cfg.initial_rtt_ms)) {
  if (cfg_.window == 0) throw std::invalid_argument("reliability window must be >= 1");
  if (cfg_.max_retries < 1) throw std::invalid_argument("max_retries must be >= 1");
}

std::vector<Segment> ReliabilityState::send(Bytes frame, double now_ms) {
  if (!can_send()) throw std::logic_error("reliability window full");
  Pending p{next_send_seq_++, std::move(frame), now_ms, 0};
  std::vector<Segment> out{data_segment(p)};
  unacked_.push_back(std::move(p));
  return out;
}

void ReliabilityState::on_ack(std::uint32_t cumulative, double now_ms) {
  std::optional<double> sample;
  while (!unacked_.empty() && unacked_.front().seq < cumulative) {
    // Karn, widened for cumulative acks: a segment sent before the latest
    // resend may have waited behind the gap, so its delay is not an RTT.
    const Pending& p = unacked_.front();
    if (p.retries == 0 && p.last_sent_at > last_resend_at_) sample = now_ms - p.last_sent_at;
    unacked_.pop_front();
  }
  if (!sample) return;
  if (!have_rtt_sample_) {
    rtt_est_ms_ = *sample;
    have_rtt_sample_ = true;
  } else {
    rtt_est_ms_ = 0.875 * rtt_est_ms_ + 0.125 * *sample;
  }
  rto_ms_ = std::clamp(cfg_.rto_factor * rtt_est_ms_, cfg_.min_rto_ms, std::max(cfg_.min_rto_ms, cfg_.max_rto_ms));
}

ReliabilityState::Received ReliabilityState::on_receive(const Segment& seg, double now_ms) {
  Received out;
  if (seg.kind == Segment::Kind::ack) {
    on_ack(seg.seq, now_ms);
    return out;
  }
  if (seg.seq == recv_next_expected_) {
    out.delivered.push_back(seg.frame);
    ++recv_next_expected_;
    for (auto it = reorder_.find(recv_next_expected_); it != reorder_.end();
         it = reorder_.find(recv_next_expected_)) {
      out.delivered.push_back(std::move(it->second));
      reorder_.erase(it);
      ++recv_next_expected_;
    }
  } else if (seg.seq > recv_next_expected_ && seg.seq - recv_next_expected_ < cfg_.window) {
    reorder_.try_emplace(seg.seq, seg.frame);
  }
  out.emissions.push_back({Segment::Kind::ack, recv_next_expected_, {}});
  ++acks_sent_;
  return out;
}

double ReliabilityState::timeout_of(const Pending& p) const {
  const int backoff = std::min(p.retries, kMaxBackoffShift);
  return rto_ms_ * static_cast<double>(1 << backoff);
}

std::vector<Segment> ReliabilityState::tick(double now_ms) {
  std::vector<Segment> out;
  if (unacked_.empty()) return out;
  // Only the oldest segment is timed; later ones follow as cumulative acks
  // advance, which keeps retransmission bursts to a single segment.
  Pending& head = unacked_.front();
  if (head.last_sent_at + timeout_of(head) > now_ms) return out;
  if (head.retries >= cfg_.max_retries)
    throw ChannelFailed("peer unresponsive: seq " + std::to_string(head.seq) + " unacknowledged after " +
                        std::to_string(head.retries) + " retransmissions");
  ++head.retries;
  ++retransmissions_;
  head.last_sent_at = now_ms;
  last_resend_at_ = now_ms;
  out.push_back(data_segment(head));
  return out;
}

std::vector<Segment> ReliabilityState::on_link_reset(double now_ms) {
  std::vector<Segment> out;
  if (unacked_.empty()) return out;
  Pending& head = unacked_.front();
  ++retransmissions_;
  head.last_sent_at = now_ms;
  last_resend_at_ = now_ms;
  out.push_back(data_segment(head));
  return out;
}

std::optional<double> ReliabilityState::next_deadline() const {
  if (unacked_.empty()) return std::nullopt;
  return unacked_.front().last_sent_at + timeout_of(unacked_.front());
}

void FaultConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
  };
  prob(drop, "drop");
  prob(duplicate, "duplicate");
  prob(reorder, "reorder");
  if (!(reorder_span_ms >= 0.0)) throw std::invalid_argument("reorder_span_ms must be non-negative");
}

FaultInjector::FaultInjector(FaultConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(mix64(seed)) {
  cfg_.validate();
}

double FaultInjector::hold_back() {
  return rng_.bernoulli(cfg_.reorder) ? rng_.uniform(0.0, cfg_.reorder_span_ms) : 0.0;
}

FaultInjector::Fate FaultInjector::next_emission() {
  Fate fate;
  ++emissions_;
  if (!rng_.bernoulli(cfg_.drop)) {
    fate.copies.push_back(hold_back());
    if (rng_.bernoulli(cfg_.duplicate)) fate.copies.push_back(hold_back());
  }
  fate.reset_after = cfg_.reset_every != 0 && emissions_ % cfg_.reset_every == 0;
  return fate;
}

}  // namespace anonpads
