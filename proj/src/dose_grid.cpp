#include "tiltdid/dose_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tiltdid/error.hpp"

namespace tiltdid {

DoseGrid::DoseGrid(std::size_t size) {
  if (size < kMinSize) {
    throw Error(Errc::invalid_parameter,
                "dose grid needs at least " + std::to_string(kMinSize) + " points");
  }
  points_.resize(size);
  weights_.assign(size, 1.0 / static_cast<double>(size));
  for (std::size_t m = 0; m < size; ++m) {
    points_[m] = (static_cast<double>(m) + 0.5) / static_cast<double>(size);
  }
}

double DoseGrid::integrate(std::span<const double> values) const {
  double total = 0.0;
  for (double v : values) total += v;
  return total * spacing();
}

double DoseGrid::integrate_product(std::span<const double> f, std::span<const double> g) const {
  double total = 0.0;
  for (std::size_t m = 0; m < f.size(); ++m) total += f[m] * g[m];
  return total * spacing();
}

double DoseGrid::interpolate(std::span<const double> values, double d) const {
  const auto m_count = points_.size();
  const double pos = d * static_cast<double>(m_count) - 0.5;
  if (pos <= 0.0) return values.front();
  if (pos >= static_cast<double>(m_count - 1)) return values.back();
  const auto lo = static_cast<std::size_t>(pos);
  const double t = pos - static_cast<double>(lo);
  return (1.0 - t) * values[lo] + t * values[lo + 1];
}

}  // namespace tiltdid
