#pragma once

// Live session endpoint: a WebSocket server streaming surface snapshots and
// accepting tool commands. Frames are binary messages holding a 4-byte
// little-endian length followed by that many bytes of UTF-8 JSON.

#include <porosim/session.hpp>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/core/detail/base64.hpp>
#include <boost/beast/websocket.hpp>

#include <bit>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <set>

namespace porosim {

// ---------------------------------------------------------------------------
// Frame protocol
// ---------------------------------------------------------------------------

inline std::string encode_frame(std::string_view payload) {
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out(4 + payload.size(), '\0');
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((n >> (8 * i)) & 0xff);
  std::memcpy(out.data() + 4, payload.data(), payload.size());
  return out;
}

/// Payload of a frame, or nullopt when the length prefix does not match.
inline std::optional<std::string> decode_frame(std::string_view frame) {
  if (frame.size() < 4) return std::nullopt;
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(frame[i])) << (8 * i);
  if (frame.size() - 4 != n) return std::nullopt;
  return std::string(frame.substr(4));
}

inline std::string base64_f32le(const float* data, std::size_t count) {
  std::string bytes(count * 4, '\0');
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u;
    std::memcpy(&u, &data[i], 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    std::memcpy(bytes.data() + 4 * i, &u, 4);
  }
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::vector<float> decode_f32le(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  std::string bytes(b64::decoded_size(text.size()), '\0');
  const auto [written, read] = b64::decode(bytes.data(), text.data(), text.size());
  (void)read;
  std::vector<float> out(written / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    std::memcpy(&out[i], &u, 4);
  }
  return out;
}

/// Arrays above `threshold` values go out as {"encoding": "f32le-base64", "data": ...}.
inline json float_array(const std::vector<float>& values, std::size_t threshold) {
  if (values.size() > threshold)
    return {{"encoding", "f32le-base64"}, {"count", values.size()}, {"data", base64_f32le(values.data(), values.size())}};
  return values;
}

inline std::vector<float> read_float_array(const json& v) {
  if (v.is_object()) return decode_f32le(v.at("data").get<std::string>());
  return v.get<std::vector<float>>();
}

inline json snapshot_json(const Snapshot& s, std::size_t base64_threshold = 256) {
  std::vector<float> pos;
  pos.reserve(3 * s.surface_positions.size());
  for (const auto& p : s.surface_positions)
    for (int k = 0; k < 3; ++k) pos.push_back(static_cast<float>(p[k]));
  const std::vector<float> wet(s.wetness.begin(), s.wetness.end());
  const std::vector<float> hl(s.highlight.begin(), s.highlight.end());
  const auto& q = s.tool_pose.rotation;
  const auto& sat = s.stats.saturation;
  return {{"type", "snapshot"},
          {"step", s.step},
          {"time", s.time},
          {"mode", to_string(s.mode)},
          {"tool", {{"active", s.tool_active},
                    {"position", {s.tool_pose.position.x(), s.tool_pose.position.y(), s.tool_pose.position.z()}},
                    {"rotation", {q.w(), q.x(), q.y(), q.z()}}}},
          {"force", {s.force.force.x(), s.force.force.y(), s.force.force.z()}},
          {"contact_count", s.force.contact_count},
          {"saturation", {{"min", sat.min}, {"mean", sat.mean}, {"max", sat.max}, {"water_mass", sat.total_mass}}},
          {"highlight_radius", s.highlight_radius},
          {"vertex_count", s.surface_positions.size()},
          {"positions", float_array(pos, base64_threshold)},
          {"wetness", float_array(wet, base64_threshold)},
          {"highlight", float_array(hl, base64_threshold)}};
}

inline json error_json(const std::string& message) { return {{"type", "error"}, {"message", message}}; }

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// What the simulation loop reads once per step.
struct ControlState {
  ToolMode mode = ToolMode::push;
  bool pose_set = false;
  Pose pose;
  bool paused = false;
  std::uint64_t reset_count = 0;
};

/// Applies one command to `state`. Throws ValidationError on malformed input
/// and leaves `state` untouched in that case.
inline void apply_command(ControlState& state, const json& cmd) {
  using detail::check;
  check(cmd.is_object(), "command", "expected an object");
  auto it = cmd.find("type");
  check(it != cmd.end() && it->is_string(), "command.type", "missing or not a string");
  const std::string type = it->get<std::string>();
  ControlState next = state;
  if (type == "set_mode") {
    auto m = cmd.find("mode");
    check(m != cmd.end() && m->is_string(), "command.mode", "missing or not a string");
    const auto mode = parse_tool_mode(m->get<std::string>());
    check(mode.has_value(), "command.mode", "unknown tool mode");
    next.mode = *mode;
  } else if (type == "proxy_pose") {
    auto p = cmd.find("position");
    check(p != cmd.end(), "command.position", "missing");
    next.pose.position = detail::vec3_field(*p, "command.position");
    if (auto r = cmd.find("rotation"); r != cmd.end()) {
      check(r->is_array() && r->size() == 4, "command.rotation", "expected [w, x, y, z]");
      double q[4];
      for (int k = 0; k < 4; ++k) {
        check((*r)[k].is_number(), "command.rotation", "expected numbers");
        q[k] = (*r)[k].get<double>();
      }
      Eigen::Quaterniond rot(q[0], q[1], q[2], q[3]);
      check(rot.norm() > 1e-12, "command.rotation", "zero quaternion");
      next.pose.rotation = rot.normalized();
    }
    next.pose_set = true;
  } else if (type == "pause") {
    auto p = cmd.find("paused");
    next.paused = p == cmd.end() ? true : (check(p->is_boolean(), "command.paused", "expected a boolean"), p->get<bool>());
  } else if (type == "reset") {
    ++next.reset_count;
    next.pose_set = false;
  } else {
    throw ValidationError("command.type", "unknown command '" + type + "'");
  }
  state = next;
}

// ---------------------------------------------------------------------------
// Server
// ---------------------------------------------------------------------------

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  double snapshot_rate = 60.0;
  std::size_t base64_threshold = 256;
  bool real_time = true;  // pace steps to the wall clock
};

class Server {
 public:
  Server(Session& session, ServerOptions options = {})
      : session_(session),
        options_(options),
        acceptor_(io_),
        timer_(io_),
        haptics_(forces_, session.config().haptic_rate) {}

  ~Server() { stop(); }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  void start() {
    namespace asio = boost::asio;
    const asio::ip::tcp::endpoint ep(asio::ip::make_address(options_.address), options_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    publish_snapshot();
    running_.store(true);
    do_accept();
    schedule_broadcast();
    sim_thread_ = std::thread([this] { simulate(); });
    haptics_.start();
    io_thread_ = std::thread([this] { io_.run(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (sim_thread_.joinable()) sim_thread_.join();
    haptics_.stop();
    boost::asio::post(io_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      timer_.cancel();
      for (auto& c : clients_) c->close();
      clients_.clear();
    });
    if (io_thread_.joinable()) io_thread_.join();
  }

  unsigned short port() const { return port_; }
  std::uint64_t steps() const { return steps_.load(); }
  std::uint64_t broadcasts() const { return broadcasts_.load(); }
  /// Valid after stop().
  const HapticLoopStats& haptic_stats() const { return haptics_.stats(); }
  /// Solver error text if the simulation loop stopped on one.
  std::string failure() const {
    std::lock_guard lock(control_mutex_);
    return failure_;
  }

  /// Same path as a client command.
  void submit(const json& cmd) {
    std::lock_guard lock(control_mutex_);
    apply_command(control_, cmd);
    control_box_.publish(control_);
  }

 private:
  using tcp = boost::asio::ip::tcp;
  using SnapshotPtr = std::shared_ptr<const Snapshot>;

  class Client : public std::enable_shared_from_this<Client> {
   public:
    Client(tcp::socket socket, Server& server) : ws_(std::move(socket)), server_(server) {}

    void run() {
      ws_.binary(true);
      ws_.async_accept([self = shared_from_this()](boost::beast::error_code ec) {
        if (ec) return;
        self->server_.joined(self);
        self->read();
      });
    }

    void send(std::shared_ptr<const std::string> frame) {
      if (queue_.size() >= kMaxQueue) {
        close();
        return;
      }
      queue_.push_back(std::move(frame));
      if (queue_.size() == 1) write();
    }

    void close() {
      boost::beast::error_code ec;
      ws_.next_layer().close(ec);
    }

   private:
    static constexpr std::size_t kMaxQueue = 256;

    void read() {
      ws_.async_read(buffer_, [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
        if (ec) {
          self->server_.left(self);
          return;
        }
        std::string data = boost::beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        self->server_.received(self, data);
        self->read();
      });
    }

    void write() {
      ws_.async_write(boost::asio::buffer(*queue_.front()),
                      [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
                        if (ec) {
                          self->server_.left(self);
                          return;
                        }
                        self->queue_.pop_front();
                        if (!self->queue_.empty()) self->write();
                      });
    }

    boost::beast::websocket::stream<tcp::socket> ws_;
    boost::beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    Server& server_;
  };

  // -- io thread ---------------------------------------------------------------

  void do_accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (!running_.load()) return;
      if (!ec) std::make_shared<Client>(std::move(socket), *this)->run();
      do_accept();
    });
  }

  void joined(const std::shared_ptr<Client>& c) {
    clients_.insert(c);
    if (last_frame_) c->send(last_frame_);
  }

  void left(const std::shared_ptr<Client>& c) { clients_.erase(c); }

  void received(const std::shared_ptr<Client>& c, const std::string& data) {
    const auto payload = decode_frame(data);
    std::string error;
    if (!payload) {
      error = "frame length prefix does not match the message size";
    } else {
      try {
        submit(json::parse(*payload));
      } catch (const json::parse_error& e) {
        error = std::string("malformed JSON: ") + e.what();
      } catch (const ValidationError& e) {
        error = e.what();
      }
    }
    if (!error.empty()) c->send(std::make_shared<const std::string>(encode_frame(error_json(error).dump())));
  }

  void schedule_broadcast() {
    timer_.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / options_.snapshot_rate)));
    timer_.async_wait([this](boost::system::error_code ec) {
      if (ec || !running_.load()) return;
      broadcast();
      schedule_broadcast();
    });
  }

  // The interval between broadcasts is at least one period because the timer
  // is re-armed relative to the previous firing.
  void broadcast() {
    bool fresh = false;
    const SnapshotPtr snap = snapshots_.read(&fresh);
    if (!fresh || !snap) return;
    json doc = snapshot_json(*snap, options_.base64_threshold);
    doc["server_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    last_frame_ = std::make_shared<const std::string>(encode_frame(doc.dump()));
    ++broadcasts_;
    for (const auto& c : clients_) c->send(last_frame_);
  }

  // -- simulation thread -------------------------------------------------------

  void publish_snapshot() { snapshots_.publish(std::make_shared<const Snapshot>(session_.snapshot())); }

  void simulate() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(session_.config().sim.dt));
    auto deadline = clock::now();
    std::uint64_t resets_seen = control_box_.read().reset_count;
    while (running_.load()) {
      // One read per step, so a command is never half-applied.
      const ControlState c = control_box_.read();
      if (c.reset_count != resets_seen) {
        resets_seen = c.reset_count;
        session_.reset();
        publish_snapshot();
      }
      if (!c.paused) {
        if (c.pose_set && session_.has_proxy()) {
          if (!session_.tool_active()) session_.place_tool(c.pose, c.mode);
        } else if (session_.tool_active()) {
          session_.remove_tool();
        }
        try {
          const StepResult r = session_.step(c.pose_set ? c.pose : session_.tool_pose(), c.mode);
          forces_.publish(r.force);
        } catch (const Error& e) {
          std::lock_guard lock(control_mutex_);
          failure_ = e.what();
          return;
        }
        ++steps_;
        publish_snapshot();
      }
      if (options_.real_time || c.paused) {
        deadline += period;
        const auto now = clock::now();
        if (now > deadline + period) deadline = now;
        std::this_thread::sleep_until(deadline);
      }
    }
  }

  Session& session_;
  ServerOptions options_;
  boost::asio::io_context io_;
  tcp::acceptor acceptor_;
  boost::asio::steady_timer timer_;
  std::set<std::shared_ptr<Client>> clients_;
  std::shared_ptr<const std::string> last_frame_;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();

  mutable std::mutex control_mutex_;
  ControlState control_;
  std::string failure_;
  Mailbox<ControlState> control_box_;
  Mailbox<SnapshotPtr> snapshots_;
  ForceMailbox forces_;
  HapticLoop haptics_;

  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> steps_{0};
  std::atomic<std::uint64_t> broadcasts_{0};
  unsigned short port_ = 0;
  std::thread sim_thread_;
  std::thread io_thread_;
};

}  // namespace porosim
