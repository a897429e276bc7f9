#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tiltdid {

// Cell-centred grid over the dose support (0,1]: d_m = (m - 1/2)/M with equal
// weights 1/M, i.e. the composite midpoint rule. Every dose integral in the
// library goes through this grid. Sums are scaled by 1/M once, so constant
// curves integrate exactly.
class DoseGrid {
 public:
  static constexpr std::size_t kDefaultSize = 101;
  static constexpr std::size_t kMinSize = 11;

  explicit DoseGrid(std::size_t size = kDefaultSize);

  std::size_t size() const noexcept { return points_.size(); }
  std::span<const double> points() const noexcept { return points_; }
  std::span<const double> weights() const noexcept { return weights_; }
  double point(std::size_t m) const { return points_[m]; }
  double weight(std::size_t m) const { return weights_[m]; }
  double spacing() const noexcept { return 1.0 / static_cast<double>(points_.size()); }

  double integrate(std::span<const double> values) const;
  // Integral of f*g over the grid.
  double integrate_product(std::span<const double> f, std::span<const double> g) const;

  // Linear interpolation of grid values at dose d; clamps to the boundary
  // values outside [d_1, d_M].
  double interpolate(std::span<const double> values, double d) const;

 private:
  std::vector<double> points_;
  std::vector<double> weights_;
};

}  // namespace tiltdid
