#pragma once

// Fixed-support categorical value distributions: the atom grid, the
// distributional Bellman shift, projection back onto the grid, and the
// cross-entropy TD loss.

#include <memory>
#include <span>
#include <vector>

#include "cdmpo/common.hpp"

namespace cdmpo {

/// Evenly spaced support z_i = v_min + i * delta_z, i in [0, n_atoms).
struct AtomGrid {
  double v_min = 0.0;
  double v_max = 1.0;
  std::size_t n_atoms = 2;
  double delta_z = 1.0;
  std::vector<double> atoms;
};

/// Throws ConfigError unless n_atoms >= 2 and v_max > v_min.
AtomGrid make_grid(double v_min, double v_max, std::size_t n_atoms);

class CategoricalDistribution {
 public:
  /// Validates that probs is a probability vector over the grid (sum 1 within 1e-9).
  CategoricalDistribution(std::shared_ptr<const AtomGrid> grid, std::vector<double> probs);

  static CategoricalDistribution point_mass(std::shared_ptr<const AtomGrid> grid, std::size_t index);
  static CategoricalDistribution uniform(std::shared_ptr<const AtomGrid> grid);

  const AtomGrid& grid() const { return *grid_; }
  const std::shared_ptr<const AtomGrid>& grid_ptr() const { return grid_; }
  std::span<const double> probs() const { return probs_; }

 private:
  std::shared_ptr<const AtomGrid> grid_;
  std::vector<double> probs_;
};

double expectation(const CategoricalDistribution& dist);
double expectation(const AtomGrid& grid, std::span<const double> probs);

/// Shifted support signal + gamma * z_i; probabilities travel unchanged.
struct ShiftedAtoms {
  std::vector<double> locations;
  std::vector<double> probs;
};

ShiftedAtoms bellman_shift(double signal, double gamma, const CategoricalDistribution& next);

/// Clamps each location into [v_min, v_max] and splits its mass linearly
/// between the two bracketing atoms.
CategoricalDistribution project(std::shared_ptr<const AtomGrid> grid,
                                std::span<const double> locations, std::span<const double> probs);

/// Allocation-free form of project(); `out` is overwritten.
void project_into(const AtomGrid& grid, std::span<const double> locations,
                  std::span<const double> probs, std::span<double> out);

/// Projects signal + gamma * z onto the grid without materialising locations.
void project_shifted_into(const AtomGrid& grid, double signal, double gamma,
                          std::span<const double> next_probs, std::span<double> out);

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> grad_logits;
};

/// loss = -sum_i target_i * log softmax(logits)_i; grad = softmax(logits) - target.
CrossEntropy cross_entropy_loss(const CategoricalDistribution& target, std::span<const double> logits);

/// Span form used by the critics; writes the gradient into grad_out and returns the loss.
double cross_entropy_into(std::span<const double> target, std::span<const double> logits,
                          std::span<double> grad_out);

}  // namespace cdmpo
