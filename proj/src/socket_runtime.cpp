#include "anonpads/socket_runtime.hpp"

#include <array>

namespace anonpads {

SocketRuntime::SocketRuntime(Actor& actor, SocketRuntimeConfig cfg)
    : actor_(actor), cfg_(std::move(cfg)), start_(std::chrono::steady_clock::now()) {
  if (cfg_.transport == Scheme::emu) throw std::invalid_argument("the emulated overlay runs in-process only");
  if (cfg_.listen) listener_ = TcpListener::bind(cfg_.bind_host, cfg_.bind_port);
  if (cfg_.advertise) {
    advertised_ = *cfg_.advertise;
    if (advertised_.port == 0 && cfg_.listen) advertised_.port = listener_.port();
  } else {
    advertised_ = Endpoint{Scheme::direct, cfg_.bind_host, cfg_.listen ? listener_.port() : std::uint16_t{1}};
  }
}

SocketRuntime::~SocketRuntime() { shutdown_all(); }

double SocketRuntime::now_ms() const {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
}

void SocketRuntime::push(Event ev) {
  {
    std::lock_guard lock(mu_);
    events_.push_back(std::move(ev));
  }
  cv_.notify_one();
}

void SocketRuntime::stop() {
  stopping_ = true;
  cv_.notify_all();
}

void SocketRuntime::run() {
  if (cfg_.listen) acceptor_ = std::thread([this] { accept_loop(); });
  actor_.on_start(*this);
  while (!finished_ && !stopping_) {
    std::deque<Event> batch;
    {
      std::unique_lock lock(mu_);
      auto ready = [this] { return !events_.empty() || stopping_; };
      if (timers_.empty()) {
        cv_.wait(lock, ready);
      } else {
        const auto deadline = start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                           std::chrono::duration<double, std::milli>(timers_.begin()->first));
        cv_.wait_until(lock, deadline, ready);
      }
      batch.swap(events_);
    }
    for (auto& ev : batch) {
      if (finished_) break;
      dispatch(ev);
    }
    while (!finished_ && !timers_.empty() && timers_.begin()->first <= now_ms()) {
      const std::uint64_t token = timers_.begin()->second;
      timers_.erase(timers_.begin());
      actor_.on_timer(*this, token);
    }
  }
  shutdown_all();
}

void SocketRuntime::dispatch(Event& ev) {
  std::visit(
      [this](auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, Accepted>) {
          actor_.on_accepted(*this, e.id);
        } else if constexpr (std::is_same_v<T, Connected>) {
          actor_.on_connected(*this, e.id);
        } else if constexpr (std::is_same_v<T, ConnectFailed>) {
          actor_.on_connect_failed(*this, e.id, e.reason);
        } else if constexpr (std::is_same_v<T, Inbound>) {
          actor_.on_message(*this, e.id, std::move(e.msg));
        } else if constexpr (std::is_same_v<T, Closed>) {
          {
            std::lock_guard lock(mu_);
            if (auto it = conns_.find(e.id); it != conns_.end()) it->second->closed = true;
          }
          actor_.on_closed(*this, e.id, e.reason);
        }
      },
      ev);
}

void SocketRuntime::accept_loop() {
  while (!stopping_) {
    TcpStream s = listener_.accept(std::chrono::milliseconds(50));
    if (!s.valid()) continue;
    const ConnId id = next_id_++;
    start_reader(id, std::move(s), Accepted{id});
  }
}

void SocketRuntime::start_reader(ConnId id, TcpStream stream, Event announce) {
  auto conn = std::make_shared<Conn>();
  conn->stream = std::move(stream);
  {
    // Registered before the actor hears of it, so it can send right away.
    std::lock_guard lock(mu_);
    conns_[id] = conn;
    events_.push_back(std::move(announce));
    conn->reader = std::thread([this, id, conn] { read_loop(id, conn); });
  }
  cv_.notify_one();
}

void SocketRuntime::read_loop(ConnId id, const std::shared_ptr<Conn>& conn) {
  FrameDecoder decoder;
  std::array<std::uint8_t, 64 * 1024> buf{};
  try {
    for (;;) {
      const std::size_t n = conn->stream.read_some(buf);
      if (n == 0) {
        if (!stopping_) push(Closed{id, "closed by peer"});
        return;
      }
      decoder.feed(ByteView(buf.data(), n));
      while (auto msg = decoder.next()) push(Inbound{id, std::move(*msg)});
    }
  } catch (const std::exception& e) {
    if (!stopping_) push(Closed{id, e.what()});
    conn->stream.shutdown_both();
  }
}

void SocketRuntime::interruptible_sleep(std::chrono::milliseconds d) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, d, [this] { return stopping_.load(); });
}

TcpStream SocketRuntime::open_stream(const Endpoint& ep) {
  if (ep.scheme == Scheme::emu) throw TransportError("emulated endpoints are unreachable over sockets", ep.to_string());
  if (cfg_.transport == Scheme::socks || ep.scheme == Scheme::socks) {
    return socks_connect(cfg_.socks, ep, [this](std::chrono::milliseconds d) { interruptible_sleep(d); }).stream;
  }
  std::string last;
  for (int attempt = 0; attempt < std::max(1, cfg_.direct_connect_retries); ++attempt) {
    if (attempt > 0) interruptible_sleep(std::chrono::milliseconds(cfg_.direct_backoff_ms << std::min(attempt - 1, 6)));
    if (stopping_) break;
    try {
      return TcpStream::connect(ep.host, ep.port, cfg_.connect_timeout);
    } catch (const TransportError& e) {
      last = e.what();
    }
  }
  throw TransportError("peer unreachable after retries (" + last + ")", ep.to_string());
}

ConnId SocketRuntime::connect(const Endpoint& ep) {
  const ConnId id = next_id_++;
  helpers_.emplace_back([this, id, ep] {
    try {
      TcpStream s = open_stream(ep);
      if (stopping_) return;
      start_reader(id, std::move(s), Connected{id});
    } catch (const std::exception& e) {
      if (!stopping_) push(ConnectFailed{id, e.what()});
    }
  });
  return id;
}

void SocketRuntime::send(ConnId id, const Message& msg) {
  std::shared_ptr<Conn> conn;
  {
    std::lock_guard lock(mu_);
    auto it = conns_.find(id);
    if (it == conns_.end()) throw std::invalid_argument("send on unknown connection " + std::to_string(id));
    conn = it->second;
  }
  if (conn->closed) return;
  const Bytes frame = encode_frame(msg);
  try {
    conn->stream.write_all(frame);
    bytes_sent_ += frame.size();
  } catch (const TransportError& e) {
    conn->closed = true;
    push(Closed{id, e.what()});
  }
}

void SocketRuntime::close(ConnId id) {
  std::lock_guard lock(mu_);
  auto it = conns_.find(id);
  if (it == conns_.end() || it->second->closed) return;
  it->second->closed = true;
  it->second->stream.shutdown_write();
}

void SocketRuntime::set_timer(double delay_ms, std::uint64_t token) {
  timers_.emplace(now_ms() + std::max(0.0, delay_ms), token);
}

void SocketRuntime::shutdown_all() {
  stopping_ = true;
  cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  for (auto& t : helpers_)
    if (t.joinable()) t.join();
  helpers_.clear();
  std::map<ConnId, std::shared_ptr<Conn>> conns;
  {
    std::lock_guard lock(mu_);
    conns.swap(conns_);
  }
  for (auto& [id, c] : conns) c->stream.shutdown_both();
  for (auto& [id, c] : conns)
    if (c->reader.joinable()) c->reader.join();
  listener_.close();
}

}  // namespace anonpads
