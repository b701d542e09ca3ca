#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "anonpads/rng.hpp"
#include "anonpads/wire.hpp"

namespace anonpads {

/// Unit carried by an unreliable link. Data segments carry one encoded frame;
/// ack segments carry the cumulative sequence (all seq < value received).
struct Segment {
  enum class Kind : std::uint8_t { data = 0, ack = 1 };
  Kind kind = Kind::data;
  std::uint32_t seq = 0;
  Bytes frame;

  bool operator==(const Segment&) const = default;
};

/// Wire form: kind byte, then seq (4 bytes BE) and the frame for data, or an
/// encoded Ack frame for acks.
Bytes encode_segment(const Segment& s);
std::optional<Segment> decode_segment(ByteView bytes);

class ChannelFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReliabilityConfig {
  std::size_t window = 64;
  double min_rto_ms = 200.0;
  double rto_factor = 4.0;
  /// RTT estimate used until the first sample arrives.
  double initial_rtt_ms = 1000.0;
  double max_rto_ms = 60'000.0;
  int max_retries = 20;
};

/// Sliding-window sender plus cumulative-ack receiver for one endpoint of a
/// bidirectional link. Single owner; time is passed in explicitly, and
/// retransmissions only happen from tick().
class ReliabilityState {
 public:
  struct Received {
    std::vector<Bytes> delivered;
    std::vector<Segment> emissions;
  };

  explicit ReliabilityState(ReliabilityConfig cfg = {});

  bool can_send() const { return unacked_.size() < cfg_.window; }

  /// Precondition: can_send(). Throws std::logic_error otherwise.
  std::vector<Segment> send(Bytes frame, double now_ms);

  /// Handles one inbound segment. Delivered frames are gap-free and
  /// duplicate-free in sender order.
  Received on_receive(const Segment& seg, double now_ms);

  /// Retransmits the oldest unacknowledged segment once its timer (rto with
  /// capped exponential backoff) expires. Throws ChannelFailed once it has
  /// been retransmitted max_retries times without being acknowledged.
  std::vector<Segment> tick(double now_ms);

  /// The link lost everything in flight: resend the oldest unacked segment
  /// now; the rest follow as acks come back.
  std::vector<Segment> on_link_reset(double now_ms);

  /// Earliest time tick() has work to do.
  std::optional<double> next_deadline() const;

  std::uint32_t next_send_seq() const { return next_send_seq_; }
  std::uint32_t recv_next_expected() const { return recv_next_expected_; }
  std::size_t unacked_count() const { return unacked_.size(); }
  double rto_ms() const { return rto_ms_; }
  double rtt_estimate_ms() const { return rtt_est_ms_; }
  std::uint64_t retransmissions() const { return retransmissions_; }
  std::uint64_t acks_sent() const { return acks_sent_; }
  const ReliabilityConfig& config() const { return cfg_; }

 private:
  struct Pending {
    std::uint32_t seq = 0;
    Bytes frame;
    double last_sent_at = 0.0;
    int retries = 0;
  };

  static constexpr int kMaxBackoffShift = 3;

  void on_ack(std::uint32_t cumulative, double now_ms);
  double timeout_of(const Pending& p) const;
  Segment data_segment(const Pending& p) const { return {Segment::Kind::data, p.seq, p.frame}; }

  ReliabilityConfig cfg_;
  std::uint32_t next_send_seq_ = 0;
  std::deque<Pending> unacked_;
  std::uint32_t recv_next_expected_ = 0;
  std::map<std::uint32_t, Bytes> reorder_;
  double rtt_est_ms_;
  double rto_ms_;
  bool have_rtt_sample_ = false;
  double last_resend_at_ = -1.0;
  std::uint64_t retransmissions_ = 0;
  std::uint64_t acks_sent_ = 0;
};

/// Seeded fault schedule for an emulated link.
struct FaultConfig {
  double drop = 0.0;
  double duplicate = 0.0;
  /// Probability that a copy is held back by an extra U[0, reorder_span_ms].
  double reorder = 0.0;
  double reorder_span_ms = 0.0;
  /// Reset the link after every n-th emission (0 disables).
  std::uint64_t reset_every = 0;

  void validate() const;
};

class FaultInjector {
 public:
  struct Fate {
    /// Extra delay per delivered copy; empty means dropped.
    std::vector<double> copies;
    bool reset_after = false;
  };

  FaultInjector(FaultConfig cfg, std::uint64_t seed);

  Fate next_emission();
  std::uint64_t emissions() const { return emissions_; }

 private:
  double hold_back();

  FaultConfig cfg_;
  Rng rng_;
  std::uint64_t emissions_ = 0;
};

}  // namespace anonpads
