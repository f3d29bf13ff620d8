#pragma once

// Continuous penalty impulses over penetration intervals, their action and
// reaction on the object and the tool, and the fixed-rate force loop.

#include <porosim/collision.hpp>
#include <porosim/core/format.hpp>
#include <porosim/mailbox.hpp>

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <functional>
#include <string>
#include <thread>

#if defined(__linux__)
#include <sys/prctl.h>
#endif

namespace porosim {

enum class ToolMode { push, pull, wet, dry };

inline const char* to_string(ToolMode m) {
  switch (m) {
    case ToolMode::push: return "push";
    case ToolMode::pull: return "pull";
    case ToolMode::wet: return "wet";
    case ToolMode::dry: return "dry";
  }
  return "push";
}

inline std::optional<ToolMode> parse_tool_mode(std::string_view s) {
  if (s == "push") return ToolMode::push;
  if (s == "pull") return ToolMode::pull;
  if (s == "wet") return ToolMode::wet;
  if (s == "dry") return ToolMode::dry;
  return std::nullopt;
}

inline bool deforms(ToolMode m) { return m == ToolMode::push || m == ToolMode::pull; }

struct Pose {
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  Vec3 apply(const Vec3& local) const { return rotation * local + position; }
};

inline Pose interpolate(const Pose& a, const Pose& b, double s) {
  return {a.position + s * (b.position - a.position), a.rotation.slerp(s, b.rotation)};
}

struct ToolProxy {
  Vec3List local_vertices;
  std::vector<Tri> triangles;
  Pose pose_start;
  Pose pose_end;
  ToolMode mode = ToolMode::push;
  double k_vf = 1.0;
  double k_ee = 1.0;

  MovingMesh moving_mesh() const {
    MovingMesh m;
    m.triangles = triangles;
    m.start.reserve(local_vertices.size());
    m.end.reserve(local_vertices.size());
    for (const auto& v : local_vertices) {
      m.start.push_back(pose_start.apply(v));
      m.end.push_back(pose_end.apply(v));
    }
    return m;
  }
};

struct ForceSample {
  double time = 0.0;
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();  // reserved, always zero
  std::uint64_t sequence = 0;
  int contact_count = 0;
  ToolMode mode = ToolMode::push;
};

using ForceMailbox = Mailbox<ForceSample>;

// ---------------------------------------------------------------------------
// Penalty integrals
// ---------------------------------------------------------------------------

namespace gauss8 {
inline constexpr std::array<double, 8> kNodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                 -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                 0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kWeights = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                                   0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                                   0.2223810344533745, 0.1012285362903763};
}  // namespace gauss8

/// 8-point Gauss-Legendre integral of n_t (n_t . (p_t - q_t)) over [t_a, t_b],
/// split into `pieces` equal panels.
inline Vec3 interval_integral(const ContactEvent& ev, double t_a, double t_b, int pieces = 1) {
  Vec3 sum = Vec3::Zero();
  const double h = (t_b - t_a) / pieces;
  for (int p = 0; p < pieces; ++p) {
    const double lo = t_a + p * h;
    const double half = 0.5 * h, mid = lo + half;
    for (int k = 0; k < 8; ++k) {
      const double t = mid + half * gauss8::kNodes[k];
      const auto [pt, qt] = ev.contact_points(t);
      const Vec3 n = ev.normal(t);
      sum += gauss8::kWeights[k] * half * n.dot(pt - qt) * n;
    }
  }
  return sum;
}

/// I = k * sum_i integral_{t_a^i}^{t_b^i} n_t (n_t . (p_t - q_t)) dt.
inline Vec3 penalty_impulse(const ContactEvent& ev, double stiffness, int pieces = 1) {
  Vec3 total = Vec3::Zero();
  for (const auto& iv : ev.intervals) total += interval_integral(ev, iv.t_a, iv.t_b, pieces);
  return stiffness * total;
}

inline Vec3 penalty_impulse_vf(const ContactEvent& ev, double k_vf) { return penalty_impulse(ev, k_vf); }
inline Vec3 penalty_impulse_ee(const ContactEvent& ev, double k_ee) { return penalty_impulse(ev, k_ee); }

struct ToolStepResult {
  Vec3List nodal_impulses;  // applied to the object (all zero for wet/dry)
  Vec3 tool_impulse = Vec3::Zero();
  ForceSample reaction;     // force felt by the tool, impulse / dt
  int contact_count = 0;
};

/// Distributes each event's impulse to its object nodes with the interval
/// midpoint weights (sign flipped for pull). The tool receives minus the
/// index-ordered sum of the nodal impulses. Wet/dry tools compute the same
/// force but leave the mesh untouched.
inline ToolStepResult apply_tool_step(std::size_t vertex_count, ToolMode mode, double k_vf, double k_ee,
                                      const std::vector<ContactEvent>& events, double dt) {
  ToolStepResult result;
  Vec3List contribution(vertex_count, Vec3::Zero());
  const double sign = mode == ToolMode::pull ? -1.0 : 1.0;
  for (const auto& ev : events) {
    const double k = ev.kind == ContactKind::vertex_face ? k_vf : k_ee;
    for (std::size_t i = 0; i < ev.intervals.size(); ++i) {
      const auto& iv = ev.intervals[i];
      const Vec3 impulse = sign * k * interval_integral(ev, iv.t_a, iv.t_b);
      for (int j = 0; j < ev.object_node_count; ++j) contribution[ev.object_nodes[j]] += ev.node_weights[i][j] * impulse;
    }
  }
  Vec3 sum = Vec3::Zero();
  for (const auto& c : contribution) sum += c;
  result.tool_impulse = Vec3::Zero() - sum;  // avoids -0 in the logs
  result.contact_count = static_cast<int>(events.size());
  result.nodal_impulses = deforms(mode) ? std::move(contribution) : Vec3List(vertex_count, Vec3::Zero());
  result.reaction.force = result.tool_impulse / dt;
  result.reaction.contact_count = result.contact_count;
  result.reaction.mode = mode;
  return result;
}

// ---------------------------------------------------------------------------
// Fixed-rate force loop
// ---------------------------------------------------------------------------

/// Histogram of inter-tick intervals in 50 us bins up to 5 ms (last bin overflow).
class JitterHistogram {
 public:
  static constexpr int kBins = 101;
  static constexpr double kBinSeconds = 50e-6;

  void add(double seconds) {
    const int bin = std::min(kBins - 1, static_cast<int>(seconds / kBinSeconds));
    ++counts_[std::max(bin, 0)];
    ++samples_;
    sum_ += seconds;
    max_ = std::max(max_, seconds);
  }

  std::uint64_t samples() const { return samples_; }
  double mean() const { return samples_ ? sum_ / static_cast<double>(samples_) : 0.0; }
  double max() const { return max_; }

  nlohmann::json to_json() const {
    nlohmann::json bins = nlohmann::json::array();
    for (int i = 0; i < kBins; ++i) {
      if (counts_[i] == 0) continue;
      bins.push_back({{"lower_us", i * kBinSeconds * 1e6}, {"count", counts_[i]}});
    }
    return {{"bin_us", kBinSeconds * 1e6}, {"samples", samples_}, {"mean_us", mean() * 1e6},
            {"max_us", max_ * 1e6}, {"bins", bins}};
  }

 private:
  std::array<std::uint64_t, kBins> counts_{};
  std::uint64_t samples_ = 0;
  double sum_ = 0.0;
  double max_ = 0.0;
};

struct HapticLoopStats {
  std::uint64_t ticks = 0;
  std::uint64_t missed = 0;   // deadlines skipped because the loop fell a full period behind
  std::uint64_t fresh = 0;    // ticks that picked up a newly published sample
  JitterHistogram jitter;
};

/// Samples the force mailbox at a fixed rate on its own thread. The tick
/// never waits on the publisher; the sink receives (tick time, sample).
class HapticLoop {
 public:
  using Sink = std::function<void(double, const ForceSample&)>;

  HapticLoop(ForceMailbox& mailbox, double rate_hz = 1000.0, Sink sink = {})
      : mailbox_(mailbox), period_(1.0 / rate_hz), sink_(std::move(sink)) {}

  ~HapticLoop() { stop(); }

  HapticLoop(const HapticLoop&) = delete;
  HapticLoop& operator=(const HapticLoop&) = delete;

  void start() {
    running_.store(true);
    thread_ = std::thread([this] { run(); });
  }

  void stop() {
    running_.store(false);
    if (thread_.joinable()) thread_.join();
  }

  /// Only valid after stop().
  const HapticLoopStats& stats() const { return stats_; }

  /// One tick without scheduling: read the mailbox and return the sample.
  static ForceSample tick(ForceMailbox& mailbox, bool* fresh = nullptr) { return mailbox.read(fresh); }

 private:
  void run() {
#if defined(__linux__)
    prctl(PR_SET_TIMERSLACK, 1UL, 0, 0, 0);
#endif
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(period_));
    const auto t0 = clock::now();
    auto deadline = t0;
    auto last = t0;
    bool first = true;
    while (running_.load(std::memory_order_relaxed)) {
      const auto now = clock::now();
      if (now - deadline >= period) {
        const auto behind = (now - deadline) / period;
        stats_.missed += static_cast<std::uint64_t>(behind);
        deadline += behind * period;
      }
      bool fresh = false;
      const ForceSample sample = tick(mailbox_, &fresh);
      const auto tick_time = clock::now();
      if (!first) stats_.jitter.add(std::chrono::duration<double>(tick_time - last).count());
      first = false;
      last = tick_time;
      ++stats_.ticks;
      if (fresh) ++stats_.fresh;
      if (sink_) sink_(std::chrono::duration<double>(tick_time - t0).count(), sample);
      deadline += period;
      std::this_thread::sleep_until(deadline);
    }
  }

  ForceMailbox& mailbox_;
  double period_;
  Sink sink_;
  std::atomic<bool> running_{false};
  std::thread thread_;
  HapticLoopStats stats_;
};

/// Virtual-clock version of the force loop for deterministic replay: emits
/// one tick every `period` seconds, each serving the latest published sample.
class ForceResampler {
 public:
  explicit ForceResampler(double rate_hz = 1000.0) : period_(1.0 / rate_hz) {}

  /// Emits all ticks with time strictly before `until`.
  template <typename Sink>
  void advance(double until, const ForceSample& latest, Sink&& sink) {
    while (true) {
      const double t = static_cast<double>(next_) * period_;
      if (!(t < until - 1e-12)) break;
      sink(t, latest);
      ++next_;
    }
  }

  std::uint64_t ticks() const { return next_; }

 private:
  double period_;
  std::uint64_t next_ = 0;
};

inline std::string force_csv_header() { return "time_s,fx,fy,fz,mode,contact_count\n"; }

inline void append_force_csv(std::string& out, double time, const ForceSample& s) {
  append_double(out, time);
  out += ',';
  append_double(out, s.force.x());
  out += ',';
  append_double(out, s.force.y());
  out += ',';
  append_double(out, s.force.z());
  out += ',';
  out += to_string(s.mode);
  out += ',';
  out += std::to_string(s.contact_count);
  out += '\n';
}

}  // namespace porosim
