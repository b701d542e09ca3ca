#include <gtest/gtest.h>

#include <deque>

#include "anonpads/reliability.hpp"
#include "support/churn.hpp"

namespace anonpads {
namespace {

Bytes frame_of(std::uint32_t i) { return encode_frame(Ack{i}); }

// Two endpoints joined by a lossy pipe; `lose` decides per segment.
struct Pipe {
  ReliabilityState a, b;
  std::deque<std::pair<int, Segment>> wire;
  std::vector<Bytes> delivered_at_b;
  double now = 0;

  explicit Pipe(ReliabilityConfig cfg = {}) : a(cfg), b(cfg) {}

  void push(int to, const std::vector<Segment>& segs) {
    for (const auto& s : segs) wire.emplace_back(to, s);
  }

  template <class Lose>
  void pump(Lose&& lose) {
    while (!wire.empty()) {
      auto [to, seg] = wire.front();
      wire.pop_front();
      now += 1;
      if (lose(seg)) continue;
      auto& dst = to == 1 ? b : a;
      auto r = dst.on_receive(seg, now);
      if (to == 1) delivered_at_b.insert(delivered_at_b.end(), r.delivered.begin(), r.delivered.end());
      push(1 - to, r.emissions);
    }
  }
};

TEST(Reliability, LosslessDeliveryInOrder) {
  Pipe p;
  for (std::uint32_t i = 0; i < 50; ++i) p.push(1, p.a.send(frame_of(i), p.now));
  p.pump([](const Segment&) { return false; });
  ASSERT_EQ(p.delivered_at_b.size(), 50u);
  for (std::uint32_t i = 0; i < 50; ++i) EXPECT_EQ(p.delivered_at_b[i], frame_of(i));
  EXPECT_EQ(p.a.unacked_count(), 0u);
  EXPECT_EQ(p.a.retransmissions(), 0u);
  EXPECT_FALSE(p.a.next_deadline().has_value());
}

TEST(Reliability, RecoversFromEverySecondDataSegmentLost) {
  Pipe p;
  int n = 0;
  auto lose = [&](const Segment& s) { return s.kind == Segment::Kind::data && (n++ % 2 == 1); };
  for (std::uint32_t i = 0; i < 20; ++i) p.push(1, p.a.send(frame_of(i), p.now));
  p.pump(lose);
  for (int round = 0; round < 200 && p.a.unacked_count() > 0; ++round) {
    p.now = *p.a.next_deadline();
    p.push(1, p.a.tick(p.now));
    p.pump(lose);
  }
  ASSERT_EQ(p.delivered_at_b.size(), 20u);
  for (std::uint32_t i = 0; i < 20; ++i) EXPECT_EQ(p.delivered_at_b[i], frame_of(i));
  EXPECT_GT(p.a.retransmissions(), 0u);
}

TEST(Reliability, DuplicatesAreSuppressed) {
  ReliabilityState rx;
  const Segment s{Segment::Kind::data, 0, frame_of(7)};
  EXPECT_EQ(rx.on_receive(s, 0).delivered.size(), 1u);
  const auto again = rx.on_receive(s, 1);
  EXPECT_TRUE(again.delivered.empty());
  ASSERT_EQ(again.emissions.size(), 1u);
  EXPECT_EQ(again.emissions[0].kind, Segment::Kind::ack);
}

TEST(Reliability, OutOfOrderIsHeldUntilTheGapFills) {
  ReliabilityState rx;
  EXPECT_TRUE(rx.on_receive({Segment::Kind::data, 1, frame_of(1)}, 0).delivered.empty());
  const auto r = rx.on_receive({Segment::Kind::data, 0, frame_of(0)}, 1);
  EXPECT_EQ(r.delivered, (std::vector<Bytes>{frame_of(0), frame_of(1)}));
  EXPECT_EQ(rx.recv_next_expected(), 2u);
}

TEST(Reliability, WindowLimitsInFlight) {
  ReliabilityConfig cfg;
  cfg.window = 4;
  ReliabilityState tx(cfg);
  for (std::uint32_t i = 0; i < 4; ++i) tx.send(frame_of(i), 0);
  EXPECT_FALSE(tx.can_send());
  EXPECT_THROW(tx.send(frame_of(4), 0), std::logic_error);
  tx.on_receive({Segment::Kind::ack, 2, {}}, 5);
  EXPECT_EQ(tx.unacked_count(), 2u);
  EXPECT_TRUE(tx.can_send());
}

TEST(Reliability, GivesUpAfterMaxRetries) {
  ReliabilityConfig cfg;
  cfg.max_retries = 3;
  ReliabilityState tx(cfg);
  tx.send(frame_of(0), 0);
  int retries = 0;
  EXPECT_THROW(
      {
        for (;;) {
          tx.tick(*tx.next_deadline());
          ++retries;
        }
      },
      ChannelFailed);
  EXPECT_EQ(retries, 3);
}

TEST(Reliability, SegmentsHeldBehindAGapGiveNoRttSample) {
  ReliabilityConfig cfg;
  cfg.min_rto_ms = 100;
  ReliabilityState tx(cfg);
  tx.send(frame_of(0), 0);
  tx.send(frame_of(1), 0);
  tx.on_receive({Segment::Kind::ack, 1, {}}, 50);
  EXPECT_DOUBLE_EQ(tx.rtt_estimate_ms(), 50.0);
  // seq 1 was lost; its retransmission is acked much later.
  tx.send(frame_of(2), 60);
  tx.tick(*tx.next_deadline());
  tx.on_receive({Segment::Kind::ack, 3, {}}, 100'000);
  EXPECT_DOUBLE_EQ(tx.rtt_estimate_ms(), 50.0);
  EXPECT_DOUBLE_EQ(tx.rto_ms(), 200.0);
}

TEST(Reliability, RtoIsCapped) {
  ReliabilityConfig cfg;
  cfg.max_rto_ms = 5000;
  ReliabilityState tx(cfg);
  tx.send(frame_of(0), 0);
  tx.on_receive({Segment::Kind::ack, 1, {}}, 1e6);
  EXPECT_DOUBLE_EQ(tx.rto_ms(), 5000.0);
}

TEST(Reliability, LinkResetResendsOldestNow) {
  ReliabilityState tx;
  tx.send(frame_of(0), 0);
  tx.send(frame_of(1), 0);
  const auto segs = tx.on_link_reset(10);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].seq, 0u);
}

TEST(Reliability, SegmentCodecRoundTrips) {
  const Segment d{Segment::Kind::data, 0xDEADBEEF, frame_of(3)};
  EXPECT_EQ(decode_segment(encode_segment(d)), d);
  const Segment a{Segment::Kind::ack, 12, {}};
  EXPECT_EQ(decode_segment(encode_segment(a)), a);
  EXPECT_FALSE(decode_segment(Bytes{7}).has_value());
}

TEST(Reliability, FaultInjectorIsSeeded) {
  FaultConfig f;
  f.drop = 0.3;
  f.duplicate = 0.2;
  f.reset_every = 10;
  FaultInjector x(f, 5), y(f, 5);
  int dropped = 0, resets = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = x.next_emission();
    const auto b = y.next_emission();
    ASSERT_EQ(a.copies, b.copies);
    ASSERT_EQ(a.reset_after, b.reset_after);
    dropped += a.copies.empty();
    resets += a.reset_after;
  }
  EXPECT_NEAR(dropped / 10000.0, 0.3, 0.02);
  EXPECT_EQ(resets, 1000);
}

TEST(Reliability, EmulatedChurnDeliversExactlyOnceInOrder) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = testing::run_churn(testing::churn_config(seed), 2000);
    EXPECT_TRUE(r.ok) << "seed " << seed << ": " << r.error;
    EXPECT_GT(r.stats.retransmissions, 0u);
    EXPECT_GT(r.stats.link_failures, 0u);
  }
}

}  // namespace
}  // namespace anonpads
