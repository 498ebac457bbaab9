#include "cdmpo/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cdmpo/simd/kernels.hpp"

namespace cdmpo {

AtomGrid make_grid(double v_min, double v_max, std::size_t n_atoms) {
  if (n_atoms < 2) throw ConfigError("atom grid needs at least 2 atoms, got " + std::to_string(n_atoms));
  if (!(v_max > v_min) || !std::isfinite(v_min) || !std::isfinite(v_max)) {
    throw ConfigError("atom grid needs finite v_max > v_min");
  }
  AtomGrid grid;
  grid.v_min = v_min;
  grid.v_max = v_max;
  grid.n_atoms = n_atoms;
  grid.delta_z = (v_max - v_min) / static_cast<double>(n_atoms - 1);
  grid.atoms.resize(n_atoms);
  for (std::size_t i = 0; i < n_atoms; ++i) {
    grid.atoms[i] = v_min + static_cast<double>(i) * grid.delta_z;
  }
  return grid;
}

CategoricalDistribution::CategoricalDistribution(std::shared_ptr<const AtomGrid> grid,
                                                 std::vector<double> probs)
    : grid_(std::move(grid)), probs_(std::move(probs)) {
  if (!grid_ || probs_.size() != grid_->n_atoms) {
    throw std::invalid_argument("distribution size does not match its atom grid");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0 + 1e-12)) throw std::invalid_argument("probability outside [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("probabilities do not sum to 1");
}

CategoricalDistribution CategoricalDistribution::point_mass(std::shared_ptr<const AtomGrid> grid,
                                                            std::size_t index) {
  std::vector<double> probs(grid->n_atoms, 0.0);
  probs.at(index) = 1.0;
  return {std::move(grid), std::move(probs)};
}

CategoricalDistribution CategoricalDistribution::uniform(std::shared_ptr<const AtomGrid> grid) {
  std::vector<double> probs(grid->n_atoms, 1.0 / static_cast<double>(grid->n_atoms));
  return {std::move(grid), std::move(probs)};
}

double expectation(const AtomGrid& grid, std::span<const double> probs) {
  return simd::dot(grid.atoms, probs);
}

double expectation(const CategoricalDistribution& dist) {
  return expectation(dist.grid(), dist.probs());
}

ShiftedAtoms bellman_shift(double signal, double gamma, const CategoricalDistribution& next) {
  ShiftedAtoms out;
  out.locations.reserve(next.grid().n_atoms);
  for (double z : next.grid().atoms) out.locations.push_back(signal + gamma * z);
  out.probs.assign(next.probs().begin(), next.probs().end());
  return out;
}

namespace {

inline void deposit(const AtomGrid& grid, double location, double mass, std::span<double> out) {
  const double clamped = std::clamp(location, grid.v_min, grid.v_max);
  const double top = static_cast<double>(grid.n_atoms - 1);
  const double b = std::clamp((clamped - grid.v_min) / grid.delta_z, 0.0, top);
  const double lower = std::floor(b);
  const auto l = static_cast<std::size_t>(lower);
  const double frac = b - lower;
  if (frac == 0.0 || l + 1 >= grid.n_atoms) {
    out[l] += mass;
  } else {
    out[l] += mass * (1.0 - frac);
    out[l + 1] += mass * frac;
  }
}

}  // namespace

void project_into(const AtomGrid& grid, std::span<const double> locations,
                  std::span<const double> probs, std::span<double> out) {
  assert(locations.size() == probs.size() && out.size() == grid.n_atoms);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < locations.size(); ++j) deposit(grid, locations[j], probs[j], out);
}

void project_shifted_into(const AtomGrid& grid, double signal, double gamma,
                          std::span<const double> next_probs, std::span<double> out) {
  assert(next_probs.size() == grid.n_atoms && out.size() == grid.n_atoms);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < grid.n_atoms; ++j) {
    deposit(grid, signal + gamma * grid.atoms[j], next_probs[j], out);
  }
}

CategoricalDistribution project(std::shared_ptr<const AtomGrid> grid,
                                std::span<const double> locations, std::span<const double> probs) {
  std::vector<double> out(grid->n_atoms, 0.0);
  project_into(*grid, locations, probs, out);
  return {std::move(grid), std::move(out)};
}

double cross_entropy_into(std::span<const double> target, std::span<const double> logits,
                          std::span<double> grad_out) {
  assert(target.size() == logits.size() && grad_out.size() == logits.size());
  const double lse = log_sum_exp(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double log_p = logits[i] - lse;
    if (target[i] != 0.0) loss -= target[i] * log_p;
    grad_out[i] = std::exp(log_p) - target[i];
  }
  return loss;
}

CrossEntropy cross_entropy_loss(const CategoricalDistribution& target, std::span<const double> logits) {
  if (logits.size() != target.probs().size()) {
    throw std::invalid_argument("logit count does not match the target distribution");
  }
  CrossEntropy out;
  out.grad_logits.resize(logits.size());
  out.loss = cross_entropy_into(target.probs(), logits, out.grad_logits);
  return out;
}

}  // namespace cdmpo
