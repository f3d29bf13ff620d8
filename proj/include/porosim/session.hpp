#pragma once

// Scene assembly, the per-step pipeline, deterministic tool-path replay and
// export/import of session state.

#include <porosim/collision.hpp>
#include <porosim/embedding.hpp>
#include <porosim/fem.hpp>
#include <porosim/haptics.hpp>
#include <porosim/material.hpp>
#include <porosim/mesh.hpp>
#include <porosim/wetting.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

namespace porosim {

inline constexpr int kSchemaVersion = 1;

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scene configuration
// ---------------------------------------------------------------------------

/// Fixed vertices either by explicit index or by an axis-aligned plane of
/// the rest bounding box ("axis": x|y|z, "side": min|max).
struct FixedSelector {
  std::vector<int> indices;
  int axis = -1;
  bool max_side = false;
  double tolerance = 1e-9;

  std::vector<int> select(const Vec3List& rest) const {
    std::vector<int> out = indices;
    if (axis >= 0 && !rest.empty()) {
      const Aabb box = bounds_of(rest);
      const double plane = max_side ? box.max[axis] : box.min[axis];
      const double tol = tolerance * std::max(1.0, box.extent().maxCoeff());
      for (std::size_t i = 0; i < rest.size(); ++i)
        if (std::abs(rest[i][axis] - plane) <= tol) out.push_back(static_cast<int>(i));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

struct SceneConfig {
  std::string tet_node;
  std::string tet_ele;
  std::string surface;  // optional; tet boundary when empty
  std::string proxy;    // optional; no tool when empty

  IsotropicElasticParams solid{1e4, 0.4};
  double density = 1000.0;
  double water_bulk_modulus = 2.2e9;
  double eps_mu = 1e-6;

  double porosity = 0.3;
  double initial_saturation = 0.0;
  DiffusionParams diffusion;

  SimParams sim;
  PlasticityParams plasticity;
  FixedSelector fixed;

  double contact_stiffness = 1e3;
  CollisionSettings collision;
  DampingKernelParams kernel{0.0, 0.0, 0.05, Vec3::Zero()};
  double haptic_rate = 1000.0;
};

namespace detail {

inline std::string join_path(const std::string& block, const std::string& key) {
  return block.empty() ? key : block + "." + key;
}

inline const json* child(const json& block, const std::string& key) {
  auto it = block.find(key);
  return it == block.end() ? nullptr : &*it;
}

inline double number_field(const json& block, const std::string& block_path, const std::string& key,
                           std::optional<double> fallback) {
  const std::string path = join_path(block_path, key);
  const json* v = child(block, key);
  if (!v) {
    if (!fallback) throw ValidationError(path, "missing required field");
    return *fallback;
  }
  if (!v->is_number()) throw ValidationError(path, "expected a number");
  const double x = v->get<double>();
  if (!std::isfinite(x)) throw ValidationError(path, "must be finite");
  return x;
}

inline void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ValidationError(path, what);
}

inline const json& object_field(const json& block, const std::string& block_path, const std::string& key,
                                bool required, const json& empty) {
  const json* v = child(block, key);
  if (!v) {
    if (required) throw ValidationError(join_path(block_path, key), "missing required block");
    return empty;
  }
  if (!v->is_object()) throw ValidationError(join_path(block_path, key), "expected an object");
  return *v;
}

inline std::string path_field(const json& block, const std::string& block_path, const std::string& key,
                              const std::filesystem::path& base, bool required) {
  const std::string path = join_path(block_path, key);
  const json* v = child(block, key);
  if (!v) {
    if (required) throw ValidationError(path, "missing required field");
    return {};
  }
  if (!v->is_string()) throw ValidationError(path, "expected a file path string");
  std::filesystem::path p = v->get<std::string>();
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) throw ValidationError(path, "file not found: " + p.string());
  return p.string();
}

inline Vec3 vec3_field(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) throw ValidationError(path, "expected an array of 3 numbers");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw ValidationError(path, "expected an array of 3 numbers");
    out[i] = v[i].get<double>();
    if (!std::isfinite(out[i])) throw ValidationError(path, "must be finite");
  }
  return out;
}

}  // namespace detail

/// Parses and range-checks a scene document. Relative file paths resolve
/// against `base_dir`. Errors name the offending field path.
inline SceneConfig parse_scene(const json& doc, const std::filesystem::path& base_dir) {
  using namespace detail;
  const json empty = json::object();
  check(doc.is_object(), "", "scene must be a JSON object");
  const double version = number_field(doc, "", "schema_version", std::nullopt);
  check(version == kSchemaVersion, "schema_version", "unsupported schema version");

  SceneConfig c;
  const json& tet = object_field(doc, "", "tet_mesh", true, empty);
  c.tet_node = path_field(tet, "tet_mesh", "node", base_dir, true);
  c.tet_ele = path_field(tet, "tet_mesh", "ele", base_dir, true);
  c.surface = path_field(doc, "", "surface", base_dir, false);
  c.proxy = path_field(doc, "", "proxy", base_dir, false);

  const json& mat = object_field(doc, "", "material", true, empty);
  c.solid.young_modulus = number_field(mat, "material", "E", std::nullopt);
  c.solid.poisson_ratio = number_field(mat, "material", "nu", std::nullopt);
  check(c.solid.young_modulus > 0.0, "material.E", "must be positive");
  check(c.solid.poisson_ratio > -1.0 && c.solid.poisson_ratio < 0.5, "material.nu", "must lie in (-1, 0.5)");
  c.density = number_field(mat, "material", "density", 1000.0);
  check(c.density > 0.0, "material.density", "must be positive");
  c.water_bulk_modulus = number_field(mat, "material", "water_bulk_modulus", 2.2e9);
  check(c.water_bulk_modulus > 0.0, "material.water_bulk_modulus", "must be positive");
  c.eps_mu = number_field(mat, "material", "eps_mu", 1e-6);
  check(c.eps_mu > 0.0 && c.eps_mu < 1.0, "material.eps_mu", "must lie in (0, 1)");

  const json& wet = object_field(doc, "", "wetting", false, empty);
  c.porosity = number_field(wet, "wetting", "porosity", number_field(mat, "material", "porosity", 0.3));
  check(c.porosity > 0.0 && c.porosity <= 1.0, child(wet, "porosity") ? "wetting.porosity" : "material.porosity",
        "must lie in (0, 1]");
  if (child(wet, "porosity") && child(mat, "porosity")) {
    check(number_field(mat, "material", "porosity", std::nullopt) == c.porosity, "material.porosity",
          "disagrees with wetting.porosity");
  }
  c.diffusion.diffusivity = number_field(wet, "wetting", "diffusivity", 0.0);
  check(c.diffusion.diffusivity >= 0.0, "wetting.diffusivity", "must be non-negative");
  c.diffusion.dt = number_field(wet, "wetting", "dt_diffusion", 1e-2);
  check(c.diffusion.dt > 0.0, "wetting.dt_diffusion", "must be positive");
  c.diffusion.delta_s = number_field(wet, "wetting", "delta_s", 0.05);
  check(c.diffusion.delta_s > 0.0 && c.diffusion.delta_s <= 1.0, "wetting.delta_s", "must lie in (0, 1]");
  c.initial_saturation = number_field(wet, "wetting", "initial_saturation", 0.0);
  check(c.initial_saturation >= 0.0 && c.initial_saturation <= 1.0, "wetting.initial_saturation",
        "must lie in [0, 1]");

  const json& sim = object_field(doc, "", "simulation", false, empty);
  c.sim.dt = number_field(sim, "simulation", "dt", 1e-2);
  check(c.sim.dt > 0.0, "simulation.dt", "must be positive");
  c.sim.density = number_field(sim, "simulation", "density", c.density);
  check(c.sim.density > 0.0, "simulation.density", "must be positive");
  c.sim.alpha = number_field(sim, "simulation", "alpha", 0.1);
  check(c.sim.alpha >= 0.0, "simulation.alpha", "must be non-negative");
  c.sim.beta = number_field(sim, "simulation", "beta", 0.01);
  check(c.sim.beta >= 0.0, "simulation.beta", "must be non-negative");
  c.sim.cg_tolerance = number_field(sim, "simulation", "cg_tolerance", 1e-6);
  check(c.sim.cg_tolerance > 0.0, "simulation.cg_tolerance", "must be positive");
  c.sim.cg_max_iterations = static_cast<int>(number_field(sim, "simulation", "cg_max_iterations", 200));
  check(c.sim.cg_max_iterations > 0, "simulation.cg_max_iterations", "must be positive");
  if (const json* w = child(sim, "stiffness_warping")) {
    check(w->is_boolean(), "simulation.stiffness_warping", "expected a boolean");
    c.sim.stiffness_warping = w->get<bool>();
  }
  const double inf = std::numeric_limits<double>::infinity();
  c.plasticity.yield = number_field(sim, "simulation", "yield", inf);
  check(c.plasticity.yield >= 0.0, "simulation.yield", "must be non-negative");
  c.plasticity.creep = number_field(sim, "simulation", "creep", 0.0);
  check(c.plasticity.creep >= 0.0 && c.plasticity.creep <= 1.0, "simulation.creep", "must lie in [0, 1]");
  c.plasticity.max = number_field(sim, "simulation", "max_plastic", inf);
  check(c.plasticity.max >= c.plasticity.yield, "simulation.max_plastic", "must be at least the yield");
  if (const json* sel = child(sim, "fixed_vertex_selector")) {
    const std::string path = "simulation.fixed_vertex_selector";
    check(sel->is_object(), path, "expected an object");
    if (const json* idx = child(*sel, "indices")) {
      check(idx->is_array(), path + ".indices", "expected an array of vertex indices");
      for (const auto& v : *idx) {
        check(v.is_number_integer() && v.get<long long>() >= 0, path + ".indices", "expected non-negative integers");
        c.fixed.indices.push_back(v.get<int>());
      }
    }
    if (const json* axis = child(*sel, "axis")) {
      const std::string a = axis->is_string() ? axis->get<std::string>() : "";
      check(a == "x" || a == "y" || a == "z", path + ".axis", "expected x, y or z");
      c.fixed.axis = a[0] - 'x';
      const std::string side = child(*sel, "side") && (*sel)["side"].is_string() ? (*sel)["side"].get<std::string>() : "min";
      check(side == "min" || side == "max", path + ".side", "expected min or max");
      c.fixed.max_side = side == "max";
      c.fixed.tolerance = number_field(*sel, path, "tolerance", 1e-9);
      check(c.fixed.tolerance >= 0.0, path + ".tolerance", "must be non-negative");
    }
  }

  const json& contact = object_field(doc, "", "contact", false, empty);
  c.contact_stiffness = number_field(contact, "contact", "stiffness", 1e3);
  check(c.contact_stiffness > 0.0, "contact.stiffness", "must be positive");
  c.collision.thickness = number_field(contact, "contact", "thickness", 5e-3);
  check(c.collision.thickness > 0.0, "contact.thickness", "must be positive");

  const json& kernel = object_field(doc, "", "kernel", false, empty);
  c.kernel.k1 = number_field(kernel, "kernel", "k1", 0.0);
  check(c.kernel.k1 >= 0.0, "kernel.k1", "must be non-negative");
  c.kernel.k2 = number_field(kernel, "kernel", "k2", 0.0);
  check(c.kernel.k2 >= 0.0, "kernel.k2", "must be non-negative");
  c.kernel.radius = number_field(kernel, "kernel", "radius", 0.05);
  check(c.kernel.radius > 0.0, "kernel.radius", "must be positive");

  const json& haptics = object_field(doc, "", "haptics", false, empty);
  c.haptic_rate = number_field(haptics, "haptics", "rate_hz", 1000.0);
  check(c.haptic_rate > 0.0, "haptics.rate_hz", "must be positive");
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path, std::string("JSON parse error: ") + e.what());
  }
}

inline SceneConfig load_scene_config(const std::string& path) {
  return parse_scene(read_json_file(path), std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Tool path script
// ---------------------------------------------------------------------------

struct ToolKeyframe {
  double time = 0.0;
  Pose pose;
  ToolMode mode = ToolMode::push;
};

/// Keyframed tool path: linear position, spherical rotation; the mode of a
/// segment is the mode of its first keyframe. Holds the last pose.
struct ToolPathScript {
  std::vector<ToolKeyframe> keyframes;

  bool empty() const { return keyframes.empty(); }
  double end_time() const { return keyframes.empty() ? 0.0 : keyframes.back().time; }

  std::size_t segment(double t) const {
    auto it = std::upper_bound(keyframes.begin(), keyframes.end(), t,
                               [](double x, const ToolKeyframe& k) { return x < k.time; });
    return it == keyframes.begin() ? 0 : static_cast<std::size_t>(it - keyframes.begin() - 1);
  }

  Pose pose_at(double t) const {
    const std::size_t i = segment(t);
    if (i + 1 >= keyframes.size()) return keyframes[i].pose;
    const auto& a = keyframes[i];
    const auto& b = keyframes[i + 1];
    return interpolate(a.pose, b.pose, std::clamp((t - a.time) / (b.time - a.time), 0.0, 1.0));
  }

  ToolMode mode_at(double t) const { return keyframes[segment(t)].mode; }

  static ToolPathScript parse(const json& doc) {
    using namespace detail;
    check(doc.is_object(), "", "script must be a JSON object");
    check(number_field(doc, "", "schema_version", std::nullopt) == kSchemaVersion, "schema_version",
          "unsupported schema version");
    const json* frames = child(doc, "keyframes");
    check(frames && frames->is_array(), "keyframes", "expected an array");
    ToolPathScript s;
    for (std::size_t i = 0; i < frames->size(); ++i) {
      const json& f = (*frames)[i];
      const std::string path = "keyframes[" + std::to_string(i) + "]";
      check(f.is_object(), path, "expected an object");
      ToolKeyframe k;
      k.time = number_field(f, path, "time", std::nullopt);
      const json* pos = child(f, "position");
      check(pos != nullptr, path + ".position", "missing required field");
      k.pose.position = vec3_field(*pos, path + ".position");
      if (const json* rot = child(f, "rotation")) {
        check(rot->is_array() && rot->size() == 4, path + ".rotation", "expected a quaternion [w, x, y, z]");
        double q[4];
        for (int j = 0; j < 4; ++j) {
          check((*rot)[j].is_number(), path + ".rotation", "expected a quaternion [w, x, y, z]");
          q[j] = (*rot)[j].get<double>();
        }
        Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
        check(quat.norm() > 1e-12, path + ".rotation", "quaternion must be non-zero");
        k.pose.rotation = quat.normalized();
      }
      if (const json* mode = child(f, "mode")) {
        const auto m = mode->is_string() ? parse_tool_mode(mode->get<std::string>()) : std::nullopt;
        check(m.has_value(), path + ".mode", "expected push, pull, wet or dry");
        k.mode = *m;
      }
      if (i == 0) check(k.time == 0.0, path + ".time", "first keyframe must be at t = 0");
      if (i > 0) check(k.time > s.keyframes.back().time, path + ".time", "keyframe times must increase strictly");
      s.keyframes.push_back(k);
    }
    return s;
  }

  static ToolPathScript load(const std::string& path) { return parse(read_json_file(path)); }
};

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

struct StepStats {
  double kinetic_energy = 0.0;
  double elastic_energy = 0.0;
  int cg_iterations = 0;
  double cg_residual = 0.0;
  SaturationStats saturation;
  int contact_count = 0;
  double max_displacement = 0.0;
  int refreshed_tets = 0;
};

struct StepResult {
  std::vector<ContactEvent> events;
  ForceSample force;
  StepStats stats;
};

struct Snapshot {
  std::uint64_t step = 0;
  double time = 0.0;
  ToolMode mode = ToolMode::push;
  bool tool_active = false;
  Pose tool_pose;
  Vec3List surface_positions;
  std::vector<double> wetness;
  std::vector<double> highlight;
  double highlight_radius = 0.0;
  ForceSample force;
  StepStats stats;
};

class Session {
 public:
  explicit Session(SceneConfig config)
      : config_(std::move(config)),
        mixture_(config_.solid, config_.water_bulk_modulus, config_.eps_mu),
        body_(load_tetgen(config_.tet_node, config_.tet_ele), config_.sim.density, mixture_.stiffness(0.0)) {
    const auto& mesh = body_.mesh();
    config_.sim.fixed_vertices = config_.fixed.select(mesh.rest_positions);
    for (int v : config_.sim.fixed_vertices) {
      if (static_cast<std::size_t>(v) >= mesh.vertex_count())
        throw ValidationError("simulation.fixed_vertex_selector.indices", "vertex index out of range");
    }
    body_.set_fixed(config_.sim.fixed_vertices);

    if (config_.surface.empty()) {
      surface_ = boundary_surface(mesh);
    } else {
      surface_ = load_obj(config_.surface);
    }
    rest_surface_ = surface_.vertices;
    embedding_ = build_embedding(mesh, surface_.vertices);

    if (!config_.proxy.empty()) {
      const SurfaceMesh proxy = load_obj(config_.proxy);
      proxy_vertices_ = proxy.vertices;
      proxy_triangles_ = proxy.triangles;
      if (proxy_triangles_.empty()) throw ValidationError("proxy", "proxy mesh has no triangles");
    }

    adjacency_ = TetAdjacency::build(mesh);
    saturation_ = SaturationField(mesh.rest_volumes, config_.porosity, config_.initial_saturation);
    if (!(diffusion_stability_number(saturation_, adjacency_, config_.diffusion) < 0.5)) {
      throw ValidationError("wetting.diffusivity", "explicit diffusion unstable: k_d*dt_diffusion*sum(A)/V >= 0.5");
    }
    refresh_element_material(body_, saturation_, mixture_);
    surface_.wetness = transfer_wetness(saturation_, embedding_);
    initial_body_ = body_;
    initial_saturation_ = saturation_;
  }

  static Session load(const std::string& scene_path) { return Session(load_scene_config(scene_path)); }

  const SceneConfig& config() const { return config_; }
  const Mixture& mixture() const { return mixture_; }
  const Body& body() const { return body_; }
  Body& body() { return body_; }
  const SurfaceMesh& surface() const { return surface_; }
  const Vec3List& rest_surface() const { return rest_surface_; }
  const CageEmbedding& embedding() const { return embedding_; }
  const SaturationField& saturation() const { return saturation_; }
  SaturationField& saturation() { return saturation_; }
  const TetAdjacency& adjacency() const { return adjacency_; }
  const Vec3List& proxy_vertices() const { return proxy_vertices_; }
  const std::vector<Tri>& proxy_triangles() const { return proxy_triangles_; }
  bool has_proxy() const { return !proxy_triangles_.empty(); }

  std::uint64_t step_index() const { return step_; }
  double time() const { return static_cast<double>(step_) * config_.sim.dt; }
  const Pose& tool_pose() const { return pose_; }
  ToolMode mode() const { return mode_; }
  bool tool_active() const { return tool_active_ && has_proxy(); }
  const ForceSample& last_force() const { return last_force_; }
  const StepStats& last_stats() const { return last_stats_; }

  /// Places the tool without sweeping it (no contacts for the jump).
  void place_tool(const Pose& pose, ToolMode mode) {
    pose_ = pose;
    mode_ = mode;
    tool_active_ = true;
  }

  void remove_tool() { tool_active_ = false; }

  /// One simulation step: the tool sweeps from its current pose to `target`.
  /// Pipeline: broad phase and CCD, penalty impulses or wetting, FEM step,
  /// damping kernel, plastic flow, surface transfer.
  StepResult step(const Pose& target, ToolMode mode) {
    mode_ = mode;
    StepResult result;
    const double dt = config_.sim.dt;
    auto& mesh = body_.mesh();

    Vec3List external;
    if (tool_active()) {
      ToolProxy proxy{proxy_vertices_, proxy_triangles_, pose_, target, mode, config_.contact_stiffness,
                      config_.contact_stiffness};
      MovingMesh object;
      object.triangles = mesh.boundary_faces;
      object.start = mesh.current_positions;
      object.end.resize(mesh.vertex_count());
      for (std::size_t i = 0; i < mesh.vertex_count(); ++i)
        object.end[i] = mesh.current_positions[i] + dt * mesh.velocities[i];
      result.events = detect_contacts(proxy.moving_mesh(), object, config_.collision);
      ToolStepResult tool = apply_tool_step(mesh.vertex_count(), mode, proxy.k_vf, proxy.k_ee, result.events, dt);
      result.force = tool.reaction;
      if (deforms(mode)) {
        external = std::move(tool.nodal_impulses);
        for (auto& f : external) f /= dt;
      } else if (!result.events.empty()) {
        const auto tets = contact_tets(result.events, mesh.boundary_faces, mesh.boundary_face_tets);
        if (mode == ToolMode::wet) absorb(saturation_, tets, config_.diffusion);
        else dry(saturation_, tets, config_.diffusion);
      }
    }
    pose_ = target;

    const long substeps = std::max(1L, std::lround(dt / config_.diffusion.dt));
    if (config_.diffusion.diffusivity > 0.0) {
      for (long k = 0; k < substeps; ++k) diffuse_step(saturation_, adjacency_, config_.diffusion);
    }
    result.stats.refreshed_tets = refresh_element_material(body_, saturation_, mixture_);

    StepReport report;
    try {
      report = porosim::step(body_, config_.sim, external);
    } catch (const SolverError& e) {
      throw SolverError("step " + std::to_string(step_) + ": conjugate gradient did not converge", e.residual(),
                        e.iterations());
    }

    if (tool_active() && deforms(mode) && !result.events.empty()) {
      DampingKernelParams kernel = config_.kernel;
      kernel.center = pose_.position;
      apply_damping_kernel(mesh, kernel);
    }
    if (config_.plasticity.creep > 0.0) apply_plastic_flow(body_, config_.plasticity);

    surface_.vertices = displace_embedded(embedding_, mesh, rest_surface_);
    surface_.wetness = transfer_wetness(saturation_, embedding_);
    if (tool_active()) {
      surface_.highlight = project_highlight(surface_.vertices, pose_.position, config_.kernel.radius);
    } else {
      std::fill(surface_.highlight.begin(), surface_.highlight.end(), 0.0);
    }

    ++step_;
    result.force.time = time();
    result.force.sequence = step_;
    result.force.mode = mode;
    result.force.contact_count = static_cast<int>(result.events.size());
    result.stats.contact_count = result.force.contact_count;
    result.stats.cg_iterations = report.cg_iterations;
    result.stats.cg_residual = report.residual;
    result.stats.kinetic_energy = body_.kinetic_energy();
    result.stats.elastic_energy = body_.elastic_energy();
    result.stats.saturation = saturation_.stats();
    result.stats.max_displacement = max_displacement();
    last_force_ = result.force;
    last_stats_ = result.stats;
    return result;
  }

  double max_displacement() const {
    const auto& mesh = body_.mesh();
    double m = 0.0;
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i)
      m = std::max(m, (mesh.current_positions[i] - mesh.rest_positions[i]).norm());
    return m;
  }

  Snapshot snapshot() const {
    Snapshot s;
    s.step = step_;
    s.time = time();
    s.mode = mode_;
    s.tool_active = tool_active();
    s.tool_pose = pose_;
    s.surface_positions = surface_.vertices;
    s.wetness = surface_.wetness;
    s.highlight = surface_.highlight;
    s.highlight_radius = config_.kernel.radius;
    s.force = last_force_;
    s.stats = last_stats_;
    return s;
  }

  /// Back to the loaded state (tool removed).
  void reset() {
    body_ = initial_body_;
    saturation_ = initial_saturation_;
    surface_.vertices = rest_surface_;
    surface_.wetness = transfer_wetness(saturation_, embedding_);
    std::fill(surface_.highlight.begin(), surface_.highlight.end(), 0.0);
    step_ = 0;
    tool_active_ = false;
    mode_ = ToolMode::push;
    pose_ = Pose{};
    last_force_ = ForceSample{};
    last_stats_ = StepStats{};
  }

  json load_summary() const {
    const auto& mesh = body_.mesh();
    return {{"tets", mesh.tet_count()},
            {"vertices", mesh.vertex_count()},
            {"boundary_faces", mesh.boundary_faces.size()},
            {"surface_vertices", surface_.vertex_count()},
            {"surface_triangles", surface_.triangles.size()},
            {"fixed_vertices", config_.sim.fixed_vertices.size()},
            {"proxy_vertices", proxy_vertices_.size()},
            {"embedding", embedding_.report()}};
  }

  // -- state export / import -------------------------------------------------

  json state() const {
    const auto& mesh = body_.mesh();
    auto vec3s = [](const Vec3List& v) {
      json a = json::array();
      for (const auto& p : v) a.push_back({p.x(), p.y(), p.z()});
      return a;
    };
    json plastic = json::array(), phi = json::array();
    for (const auto& e : body_.elements()) {
      plastic.push_back(std::vector<double>(e.plastic.data(), e.plastic.data() + 6));
      phi.push_back(e.phi);
    }
    const auto& q = pose_.rotation;
    return {{"schema_version", kSchemaVersion},
            {"step", step_},
            {"tool", {{"active", tool_active_},
                      {"mode", to_string(mode_)},
                      {"position", {pose_.position.x(), pose_.position.y(), pose_.position.z()}},
                      {"rotation", {q.w(), q.x(), q.y(), q.z()}}}},
            {"last_force", {{"time", last_force_.time},
                            {"force", {last_force_.force.x(), last_force_.force.y(), last_force_.force.z()}},
                            {"sequence", last_force_.sequence},
                            {"contact_count", last_force_.contact_count},
                            {"mode", to_string(last_force_.mode)}}},
            {"positions", vec3s(mesh.current_positions)},
            {"velocities", vec3s(mesh.velocities)},
            {"saturation", saturation_.saturations()},
            {"plastic", plastic},
            {"phi", phi}};
  }

  void restore(const json& s) {
    using namespace detail;
    auto& mesh = body_.mesh();
    check(s.is_object() && s.value("schema_version", 0) == kSchemaVersion, "state.schema_version",
          "unsupported state file");
    auto read_vec3s = [&](const char* key, Vec3List& out) {
      const json& a = s.at(key);
      check(a.is_array() && a.size() == out.size(), std::string("state.") + key, "size mismatch");
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = vec3_field(a[i], std::string("state.") + key);
    };
    read_vec3s("positions", mesh.current_positions);
    read_vec3s("velocities", mesh.velocities);
    const json& sat = s.at("saturation");
    check(sat.is_array() && sat.size() == saturation_.size(), "state.saturation", "size mismatch");
    for (std::size_t t = 0; t < saturation_.size(); ++t) saturation_.set_saturation(t, sat[t].get<double>());
    const json& plastic = s.at("plastic");
    const json& phi = s.at("phi");
    check(plastic.size() == body_.elements().size() && phi.size() == body_.elements().size(), "state.plastic",
          "size mismatch");
    for (std::size_t t = 0; t < body_.elements().size(); ++t) {
      auto& e = body_.elements()[t];
      for (int k = 0; k < 6; ++k) e.plastic[k] = plastic[t][k].get<double>();
      e.phi = phi[t].get<double>();
      body_.set_element_material(t, mixture_.stiffness(e.phi).m);
    }
    step_ = s.at("step").get<std::uint64_t>();
    const json& tool = s.at("tool");
    tool_active_ = tool.at("active").get<bool>();
    mode_ = parse_tool_mode(tool.at("mode").get<std::string>()).value_or(ToolMode::push);
    pose_.position = vec3_field(tool.at("position"), "state.tool.position");
    const json& r = tool.at("rotation");
    pose_.rotation = Eigen::Quaterniond(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>());
    const json& f = s.at("last_force");
    last_force_.time = f.at("time").get<double>();
    last_force_.force = vec3_field(f.at("force"), "state.last_force.force");
    last_force_.sequence = f.at("sequence").get<std::uint64_t>();
    last_force_.contact_count = f.at("contact_count").get<int>();
    last_force_.mode = parse_tool_mode(f.at("mode").get<std::string>()).value_or(ToolMode::push);
    surface_.vertices = displace_embedded(embedding_, mesh, rest_surface_);
    surface_.wetness = transfer_wetness(saturation_, embedding_);
    surface_.highlight = tool_active() ? project_highlight(surface_.vertices, pose_.position, config_.kernel.radius)
                                       : std::vector<double>(surface_.vertex_count(), 0.0);
  }

 private:
  static SurfaceMesh boundary_surface(const TetMesh& mesh) {
    std::vector<int> remap(mesh.vertex_count(), -1);
    Vec3List verts;
    std::vector<Tri> tris;
    for (const auto& f : mesh.boundary_faces) {
      Tri t;
      for (int k = 0; k < 3; ++k) {
        if (remap[f[k]] < 0) {
          remap[f[k]] = static_cast<int>(verts.size());
          verts.push_back(mesh.rest_positions[f[k]]);
        }
        t[k] = remap[f[k]];
      }
      tris.push_back(t);
    }
    return SurfaceMesh::from(std::move(verts), std::move(tris));
  }

  SceneConfig config_;
  Mixture mixture_;
  Body body_;
  SurfaceMesh surface_;
  Vec3List rest_surface_;
  CageEmbedding embedding_;
  Vec3List proxy_vertices_;
  std::vector<Tri> proxy_triangles_;
  TetAdjacency adjacency_;
  SaturationField saturation_;

  Body initial_body_ = body_;
  SaturationField initial_saturation_;

  std::uint64_t step_ = 0;
  bool tool_active_ = false;
  ToolMode mode_ = ToolMode::push;
  Pose pose_;
  ForceSample last_force_;
  StepStats last_stats_;
};

// ---------------------------------------------------------------------------
// Replay and logs
// ---------------------------------------------------------------------------

struct ReplayOptions {
  std::optional<double> duration;  // default: last keyframe time
  bool debug_contacts = false;
};

struct ReplayLog {
  std::string force_csv;
  std::string stats_csv;
  std::string contacts_jsonl;
  json summary;
  std::uint64_t steps = 0;
  double peak_force = 0.0;
  double peak_indentation = 0.0;
};

inline std::string stats_csv_header() {
  return "step,time_s,mode,kinetic_energy,elastic_energy,cg_iterations,sat_min,sat_mean,sat_max,water_mass,"
         "contact_count,fx,fy,fz,max_displacement\n";
}

inline void append_stats_csv(std::string& out, std::uint64_t step, const StepResult& r) {
  out += std::to_string(step);
  const auto put = [&](double x) {
    out += ',';
    append_double(out, x);
  };
  put(r.force.time);
  out += ',';
  out += to_string(r.force.mode);
  put(r.stats.kinetic_energy);
  put(r.stats.elastic_energy);
  out += ',' + std::to_string(r.stats.cg_iterations);
  put(r.stats.saturation.min);
  put(r.stats.saturation.mean);
  put(r.stats.saturation.max);
  put(r.stats.saturation.total_mass);
  out += ',' + std::to_string(r.stats.contact_count);
  put(r.force.force.x());
  put(r.force.force.y());
  put(r.force.force.z());
  put(r.stats.max_displacement);
  out += '\n';
}

inline json contacts_json(std::uint64_t step, const std::vector<ContactEvent>& events) {
  json list = json::array();
  for (const auto& ev : events) {
    json intervals = json::array();
    for (const auto& iv : ev.intervals) intervals.push_back({iv.t_a, iv.t_b});
    const char* kind = ev.kind == ContactKind::edge_edge ? "ee" : (ev.tool_vertex ? "vf" : "fv");
    list.push_back({{"kind", kind}, {"ids", {ev.tool_id, ev.object_id}}, {"intervals", intervals},
                    {"max_depth", ev.max_depth}});
  }
  return {{"step", step}, {"contacts", list}};
}

/// Runs the script on a virtual clock: fixed dt steps, with the force loop
/// resampled at the haptic rate. Logs depend only on the inputs.
inline ReplayLog run_replay(Session& session, const ToolPathScript& script, const ReplayOptions& options = {}) {
  ReplayLog log;
  const double dt = session.config().sim.dt;
  const double duration = options.duration.value_or(script.end_time());
  if (!(duration >= 0.0)) throw ValidationError("duration", "must be non-negative");
  const auto steps = static_cast<std::uint64_t>(std::llround(duration / dt));

  log.force_csv = force_csv_header();
  log.stats_csv = stats_csv_header();
  ForceResampler resampler(session.config().haptic_rate);
  ForceSample latest;

  if (!script.empty()) session.place_tool(script.pose_at(0.0), script.mode_at(0.0));

  struct ModeTiming {
    double seconds = 0.0;
    std::uint64_t steps = 0;
  };
  std::map<std::string, ModeTiming> timing;

  for (std::uint64_t k = 0; k < steps; ++k) {
    const double t0 = static_cast<double>(k) * dt;
    const double t1 = static_cast<double>(k + 1) * dt;
    const ToolMode mode = script.empty() ? ToolMode::push : script.mode_at(t0);
    const Pose target = script.empty() ? Pose{} : script.pose_at(t1);

    const auto wall0 = std::chrono::steady_clock::now();
    const StepResult r = session.step(target, mode);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    auto& mt = timing[to_string(mode)];
    mt.seconds += wall;
    ++mt.steps;

    resampler.advance(t1, latest, [&](double t, const ForceSample& s) { append_force_csv(log.force_csv, t, s); });
    latest = r.force;

    append_stats_csv(log.stats_csv, k + 1, r);
    if (options.debug_contacts) log.contacts_jsonl += contacts_json(k + 1, r.events).dump() + "\n";
    log.peak_force = std::max(log.peak_force, r.force.force.norm());
    log.peak_indentation = std::max(log.peak_indentation, r.stats.max_displacement);
  }
  log.steps = steps;

  json rates = json::object();
  double total_seconds = 0.0;
  for (const auto& [mode, mt] : timing) {
    rates[mode] = {{"steps", mt.steps}, {"mean_step_ms", 1e3 * mt.seconds / static_cast<double>(mt.steps)},
                   {"frames_per_second", static_cast<double>(mt.steps) / mt.seconds}};
    total_seconds += mt.seconds;
  }
  log.summary = {{"steps", steps},
                 {"duration_s", static_cast<double>(steps) * dt},
                 {"dt", dt},
                 {"haptic_ticks", resampler.ticks()},
                 {"frame_rate_by_mode", rates},
                 {"mean_step_ms", steps ? 1e3 * total_seconds / static_cast<double>(steps) : 0.0},
                 {"peak_force", log.peak_force},
                 {"peak_indentation", log.peak_indentation},
                 {"final_saturation", {{"min", session.saturation().stats().min},
                                       {"mean", session.saturation().stats().mean},
                                       {"max", session.saturation().stats().max},
                                       {"water_mass", session.saturation().stats().total_mass}}},
                 {"scene", session.load_summary()}};
  return log;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot write");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string saturation_csv(const SaturationField& field) {
  std::string out = "tet,saturation\n";
  for (std::size_t t = 0; t < field.size(); ++t) {
    out += std::to_string(t);
    out += ',';
    append_double(out, field.saturation(t));
    out += '\n';
  }
  return out;
}

/// Writes surface.obj, state.json and saturation.csv into `dir` (and
/// force.csv when given).
inline void export_session(const Session& session, const std::filesystem::path& dir,
                           const std::string* force_csv = nullptr) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
  write_text(dir / "surface.obj", obj_string(session.surface().vertices, session.surface().triangles));
  write_text(dir / "state.json", session.state().dump(1) + "\n");
  write_text(dir / "saturation.csv", saturation_csv(session.saturation()));
  if (force_csv) write_text(dir / "force.csv", *force_csv);
}

inline void import_state(Session& session, const std::filesystem::path& state_path) {
  try {
    session.restore(json::parse(read_text(state_path)));
  } catch (const json::exception& e) {
    throw ValidationError(state_path.string(), std::string("malformed state file: ") + e.what());
  }
}

inline void write_replay(const ReplayLog& log, const Session& session, const std::filesystem::path& dir,
                         bool debug_contacts) {
  export_session(session, dir, &log.force_csv);
  write_text(dir / "stats.csv", log.stats_csv);
  write_text(dir / "summary.json", log.summary.dump(2) + "\n");
  if (debug_contacts) write_text(dir / "contacts.jsonl", log.contacts_jsonl);
}

}  // namespace porosim
