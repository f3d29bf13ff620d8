#pragma once

// Per-tetrahedron water content: absorption, drying, face-neighbour diffusion
// and transfer of wetness to the surface mesh.

#include <porosim/embedding.hpp>
#include <porosim/mesh.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <span>

namespace porosim {

inline constexpr double kWaterDensity = 1000.0;  // kg/m^3

struct DiffusionParams {
  double diffusivity = 0.0;   // k_d
  double dt = 1e-2;           // diffusion step
  double delta_s = 0.05;      // saturation increment per contact step

  void validate() const {
    if (!(diffusivity >= 0.0)) throw DomainError("diffusivity must be non-negative");
    if (!(dt > 0.0)) throw DomainError("diffusion step must be positive");
    if (!(delta_s > 0.0 && delta_s <= 1.0)) throw DomainError("absorption increment must lie in (0, 1]");
  }
};

struct TetAdjacency {
  struct Link {
    int a;
    int b;
    double area;
  };
  std::vector<std::vector<int>> neighbors;  // per tet, ascending
  std::vector<Link> links;                  // one per shared face, a < b, sorted
  std::vector<double> area_sum;             // per tet, sum of shared-face areas

  static TetAdjacency build(const TetMesh& mesh) {
    std::map<std::array<int, 3>, std::pair<int, int>> faces;
    for (std::size_t t = 0; t < mesh.tet_count(); ++t) {
      for (const auto& lf : kTetFaces) {
        std::array<int, 3> key = {mesh.tets[t][lf[0]], mesh.tets[t][lf[1]], mesh.tets[t][lf[2]]};
        std::sort(key.begin(), key.end());
        auto [it, inserted] = faces.try_emplace(key, static_cast<int>(t), -1);
        if (!inserted) it->second.second = static_cast<int>(t);
      }
    }
    TetAdjacency adj;
    adj.neighbors.resize(mesh.tet_count());
    adj.area_sum.assign(mesh.tet_count(), 0.0);
    const auto& X = mesh.rest_positions;
    for (const auto& [key, owners] : faces) {
      if (owners.second < 0) continue;
      const double area = 0.5 * (X[key[1]] - X[key[0]]).cross(X[key[2]] - X[key[0]]).norm();
      const int a = std::min(owners.first, owners.second), b = std::max(owners.first, owners.second);
      adj.links.push_back({a, b, area});
    }
    std::sort(adj.links.begin(), adj.links.end(),
              [](const Link& l, const Link& r) { return std::tie(l.a, l.b) < std::tie(r.a, r.b); });
    for (const auto& l : adj.links) {
      adj.neighbors[l.a].push_back(l.b);
      adj.neighbors[l.b].push_back(l.a);
      adj.area_sum[l.a] += l.area;
      adj.area_sum[l.b] += l.area;
    }
    for (auto& n : adj.neighbors) std::sort(n.begin(), n.end());
    return adj;
  }
};

struct SaturationStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  double total_mass = 0.0;  // kg
};

/// Saturation S_w = m_w / (rho_w * porosity * V) per tet, in [0, 1].
class SaturationField {
 public:
  SaturationField() = default;
  SaturationField(std::span<const double> volumes, double porosity, double initial = 0.0)
      : saturation_(volumes.size(), std::clamp(initial, 0.0, 1.0)), volumes_(volumes.begin(), volumes.end()),
        porosity_(porosity) {
    if (!(porosity > 0.0 && porosity <= 1.0)) throw DomainError("porosity must lie in (0, 1]");
  }

  std::size_t size() const { return saturation_.size(); }
  double porosity() const { return porosity_; }
  double saturation(std::size_t t) const { return saturation_[t]; }
  const std::vector<double>& saturations() const { return saturation_; }
  const std::vector<double>& volumes() const { return volumes_; }

  void set_saturation(std::size_t t, double s) { saturation_[t] = std::clamp(s, 0.0, 1.0); }

  double water_mass(std::size_t t) const { return saturation_[t] * kWaterDensity * porosity_ * volumes_[t]; }

  double total_water_mass() const {
    double m = 0.0;
    for (std::size_t t = 0; t < size(); ++t) m += water_mass(t);
    return m;
  }

  SaturationStats stats() const {
    SaturationStats s;
    if (saturation_.empty()) return s;
    s.min = *std::min_element(saturation_.begin(), saturation_.end());
    s.max = *std::max_element(saturation_.begin(), saturation_.end());
    double sum = 0.0;
    for (double x : saturation_) sum += x;
    s.mean = sum / static_cast<double>(saturation_.size());
    s.total_mass = total_water_mass();
    return s;
  }

  /// Adds `delta` (negative for drying) once to each distinct tet in `tets`, clamped to [0, 1].
  void increment(std::span<const int> tets, double delta) {
    std::set<int> unique(tets.begin(), tets.end());
    for (int t : unique) saturation_[t] = std::clamp(saturation_[t] + delta, 0.0, 1.0);
  }

 private:
  std::vector<double> saturation_;
  std::vector<double> volumes_;
  double porosity_ = 1.0;
};

inline void absorb(SaturationField& field, std::span<const int> contact_tets, const DiffusionParams& params) {
  field.increment(contact_tets, params.delta_s);
}

inline void dry(SaturationField& field, std::span<const int> contact_tets, const DiffusionParams& params) {
  field.increment(contact_tets, -params.delta_s);
}

/// Largest k_d * dt * sum(A_ij) / V_i over all tets; must stay below 0.5.
inline double diffusion_stability_number(const SaturationField& field, const TetAdjacency& adj,
                                         const DiffusionParams& params) {
  double worst = 0.0;
  for (std::size_t t = 0; t < field.size(); ++t) {
    worst = std::max(worst, params.diffusivity * params.dt * adj.area_sum[t] / field.volumes()[t]);
  }
  return worst;
}

/// One explicit graph-Laplacian step. Pairwise exchange
/// F_ij = k_d A_ij (S_i - S_j) dt moves pore volume from i to j.
inline void diffuse_step(SaturationField& field, const TetAdjacency& adj, const DiffusionParams& params) {
  const double stability = diffusion_stability_number(field, adj, params);
  if (!(stability < 0.5)) {
    throw StabilityError("diffusion step violates k_d*dt*sum(A)/V < 0.5 (got " + fmt_double(stability) + ")");
  }
  if (params.diffusivity == 0.0) return;
  std::vector<double> exchange(field.size(), 0.0);
  const auto& s = field.saturations();
  for (const auto& l : adj.links) {
    const double f = params.diffusivity * l.area * (s[l.a] - s[l.b]) * params.dt;
    exchange[l.a] -= f;
    exchange[l.b] += f;
  }
  for (std::size_t t = 0; t < field.size(); ++t) {
    field.set_saturation(t, s[t] + exchange[t] / field.volumes()[t]);
  }
}

inline double saturation_to_phi(double saturation, double porosity) { return porosity * saturation; }

/// Each surface vertex takes the saturation of its containing tet.
inline std::vector<double> transfer_wetness(const SaturationField& field, const CageEmbedding& embedding) {
  std::vector<double> w(embedding.tet.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = field.saturation(embedding.tet[i]);
  return w;
}

}  // namespace porosim
