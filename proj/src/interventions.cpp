#include "tiltdid/interventions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/special_functions/beta.hpp>

#include "tiltdid/error.hpp"

namespace tiltdid {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void normalize_in_place(const DoseGrid& grid, std::span<double> values, const char* what) {
  const double total = grid.integrate(values);
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(Errc::invalid_parameter, std::string(what) + " leaves no mass on the dose grid");
  }
  for (auto& v : values) v /= total;
}

// Multiplies pi by exp(logw - max logw) and normalises.
template <class LogWeight>
void reweight_into(const DoseGrid& grid, std::span<const double> pi, std::span<double> out,
                   LogWeight logw, const char* what) {
  double top = -INFINITY;
  for (std::size_t m = 0; m < grid.size(); ++m) top = std::max(top, logw(grid.point(m)));
  for (std::size_t m = 0; m < grid.size(); ++m) out[m] = std::exp(logw(grid.point(m)) - top) * pi[m];
  normalize_in_place(grid, out, what);
}

void fixed_into(const FixedDistribution& dist, const DoseGrid& grid, std::span<double> out) {
  std::visit(overloaded{
                 [&](const UniformDose&) { std::fill(out.begin(), out.end(), 1.0); },
                 [&](const BetaDose& b) { beta_cell_density(grid, b.alpha, b.beta, out); },
                 [&](const TruncNormalDose& t) {
                   for (std::size_t m = 0; m < grid.size(); ++m) {
                     const double z = (grid.point(m) - t.mean) / t.sd;
                     out[m] = std::exp(-0.5 * z * z);
                   }
                 },
             },
             dist);
  normalize_in_place(grid, out, "parametric density");
}

void validate_distribution(const FixedDistribution& dist) {
  std::visit(overloaded{
                 [](const UniformDose&) {},
                 [](const BetaDose& b) {
                   if (!(b.alpha > 0.0 && b.beta > 0.0 && std::isfinite(b.alpha) && std::isfinite(b.beta))) {
                     throw Error(Errc::invalid_parameter, "beta parameters must be positive and finite");
                   }
                 },
                 [](const TruncNormalDose& t) {
                   if (!(t.sd > 0.0) || !std::isfinite(t.mean) || !std::isfinite(t.sd)) {
                     throw Error(Errc::invalid_parameter, "truncated normal needs finite mean and sd > 0");
                   }
                 },
             },
             dist);
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

void validate(const InterventionSpec& spec) {
  std::visit(overloaded{
                 [](const ExponentialTilt& t) {
                   if (!std::isfinite(t.delta)) throw Error(Errc::invalid_parameter, "tilt delta must be finite");
                 },
                 [](const GaussianKernel& k) {
                   if (!(k.delta > 0.0) || !std::isfinite(k.delta)) {
                     throw Error(Errc::invalid_parameter, "kernel width delta must be > 0");
                   }
                   if (!(k.center > 0.0 && k.center <= 1.0)) {
                     throw Error(Errc::invalid_parameter, "kernel centre d' must lie in (0,1]");
                   }
                 },
                 [](const MinimumDose& m) {
                   if (!(m.threshold >= 0.0 && m.threshold <= 1.0)) {
                     throw Error(Errc::invalid_parameter, "minimum dose d* must lie in [0,1]");
                   }
                 },
                 [](const ParametricShift& s) {
                   if (!std::isfinite(s.eta) || !(s.sigma > 0.0) || !std::isfinite(s.sigma)) {
                     throw Error(Errc::invalid_parameter, "parametric shift needs finite eta and sigma > 0");
                   }
                 },
                 [](const Parametric& p) { validate_distribution(p.distribution); },
             },
             spec);
}

bool depends_on_observed_density(const InterventionSpec& spec) {
  return !std::holds_alternative<Parametric>(spec);
}

std::string describe(const FixedDistribution& dist) {
  return std::visit(overloaded{
                        [](const UniformDose&) { return std::string("uniform"); },
                        [](const BetaDose& b) { return "beta:" + num(b.alpha) + "," + num(b.beta); },
                        [](const TruncNormalDose& t) { return "truncnorm:" + num(t.mean) + "," + num(t.sd); },
                    },
                    dist);
}

std::string describe(const InterventionSpec& spec) {
  return std::visit(overloaded{
                        [](const ExponentialTilt& t) { return "tilt(delta=" + num(t.delta) + ")"; },
                        [](const GaussianKernel& k) {
                          return "kernel(delta=" + num(k.delta) + ",d'=" + num(k.center) + ")";
                        },
                        [](const MinimumDose& m) { return "mindose(d*=" + num(m.threshold) + ")"; },
                        [](const ParametricShift& s) {
                          return "shift(eta=" + num(s.eta) + ",sigma=" + num(s.sigma) + ")";
                        },
                        [](const Parametric& p) { return "parametric(" + describe(p.distribution) + ")"; },
                    },
                    spec);
}

FixedDistribution parse_distribution(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  std::vector<double> params;
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        params.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw Error(Errc::invalid_parameter, "bad distribution parameter '" + item + "'");
      }
    }
  }
  FixedDistribution dist;
  if (name == "uniform" && params.empty()) {
    dist = UniformDose{};
  } else if (name == "beta" && params.size() == 2) {
    dist = BetaDose{params[0], params[1]};
  } else if (name == "truncnorm" && params.size() == 2) {
    dist = TruncNormalDose{params[0], params[1]};
  } else {
    throw Error(Errc::invalid_parameter, "unknown distribution '" + text +
                                             "' (expected uniform, beta:a,b or truncnorm:m,s)");
  }
  validate_distribution(dist);
  return dist;
}

DensityCurve::DensityCurve(std::shared_ptr<const DoseGrid> grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (!grid_ || values_.size() != grid_->size()) {
    throw Error(Errc::invalid_argument, "density curve does not match its grid");
  }
}

DensityCurve DensityCurve::normalized(std::shared_ptr<const DoseGrid> grid, std::vector<double> values) {
  DensityCurve curve(std::move(grid), std::move(values));
  normalize_in_place(*curve.grid_, curve.values_, "density");
  return curve;
}

DensityCurve DensityCurve::uniform(std::shared_ptr<const DoseGrid> grid) {
  const auto m = grid->size();
  return normalized(std::move(grid), std::vector<double>(m, 1.0));
}

double DensityCurve::mean() const { return grid_->integrate_product(grid_->points(), values_); }

double TiltNormalizer::ratio(double d) const { return std::exp(delta * d - shift) / scaled_mass; }

TiltNormalizer tilt_normalizer(const DoseGrid& grid, std::span<const double> pi, double delta) {
  TiltNormalizer norm;
  norm.delta = delta;
  norm.shift = delta >= 0.0 ? delta * grid.point(grid.size() - 1) : delta * grid.point(0);
  double mass = 0.0;
  for (std::size_t m = 0; m < grid.size(); ++m) {
    mass += std::exp(delta * grid.point(m) - norm.shift) * pi[m];
  }
  norm.scaled_mass = mass * grid.spacing();
  return norm;
}

void tilt_into(const DoseGrid& grid, std::span<const double> pi, double delta, std::span<double> out) {
  const auto norm = tilt_normalizer(grid, pi, delta);
  if (!(norm.scaled_mass > 0.0)) throw Error(Errc::invalid_parameter, "tilt of an empty density");
  for (std::size_t m = 0; m < grid.size(); ++m) out[m] = norm.ratio(grid.point(m)) * pi[m];
}

void apply_into(const InterventionSpec& spec, const DoseGrid& grid, std::span<const double> pi,
                std::span<double> out) {
  std::visit(overloaded{
                 [&](const ExponentialTilt& t) { tilt_into(grid, pi, t.delta, out); },
                 [&](const GaussianKernel& k) {
                   const double scale = 2.0 * k.delta * k.delta;
                   reweight_into(
                       grid, pi, out,
                       [&](double d) { return -(d - k.center) * (d - k.center) / scale; },
                       "gaussian kernel intervention");
                 },
                 [&](const MinimumDose& md) {
                   for (std::size_t m = 0; m < grid.size(); ++m) {
                     out[m] = grid.point(m) > md.threshold ? pi[m] : 0.0;
                   }
                   const double total = grid.integrate(out);
                   if (!(total > 0.0)) {
                     throw Error(Errc::no_mass_above_threshold, "no dose mass above d* = " + num(md.threshold));
                   }
                   for (auto& v : out) v /= total;
                 },
                 [&](const ParametricShift& s) {
                   const double center = grid.integrate_product(grid.points(), pi) + s.eta;
                   const double scale = 2.0 * s.sigma * s.sigma;
                   for (std::size_t m = 0; m < grid.size(); ++m) {
                     const double z = grid.point(m) - center;
                     out[m] = -z * z / scale;
                   }
                   const double top = *std::max_element(out.begin(), out.end());
                   for (auto& v : out) v = std::exp(v - top);
                   normalize_in_place(grid, out, "parametric shift");
                 },
                 [&](const Parametric& p) { fixed_into(p.distribution, grid, out); },
             },
             spec);
}

DensityCurve apply_intervention(const InterventionSpec& spec, const DensityCurve& pi) {
  validate(spec);
  std::vector<double> out(pi.size());
  apply_into(spec, pi.grid(), pi.values(), out);
  return DensityCurve(pi.grid_ptr(), std::move(out));
}

DensityCurve tilt_density(const DensityCurve& pi, double delta) {
  return apply_intervention(ExponentialTilt{delta}, pi);
}

DensityCurve gaussian_kernel_density(const DensityCurve& pi, double delta, double center) {
  return apply_intervention(GaussianKernel{delta, center}, pi);
}

DensityCurve minimum_dose_density(const DensityCurve& pi, double threshold) {
  return apply_intervention(MinimumDose{threshold}, pi);
}

DensityCurve parametric_shift_density(const DensityCurve& pi, double eta, double sigma) {
  return apply_intervention(ParametricShift{eta, sigma}, pi);
}

DensityCurve parametric_density(const FixedDistribution& dist, std::shared_ptr<const DoseGrid> grid) {
  validate_distribution(dist);
  std::vector<double> out(grid->size());
  fixed_into(dist, *grid, out);
  return DensityCurve(std::move(grid), std::move(out));
}

DensityCurve parametric_density(const InterventionSpec& spec, std::shared_ptr<const DoseGrid> grid) {
  const auto* p = std::get_if<Parametric>(&spec);
  if (!p) throw Error(Errc::invalid_parameter, "not a data-independent intervention: " + describe(spec));
  return parametric_density(p->distribution, std::move(grid));
}

double integrate_over_dose(const DoseGrid& grid, std::span<const double> values) {
  if (values.size() != grid.size()) throw Error(Errc::invalid_argument, "values do not match grid");
  return grid.integrate(values);
}

void beta_cell_density(const DoseGrid& grid, double alpha, double beta, std::span<double> out) {
  // 3-point Gauss-Legendre on interior cells; boundary cells, where the
  // density may be unbounded, use the regularised incomplete beta function.
  static constexpr double kNode = 0.7745966692414834;  // sqrt(3/5)
  static constexpr double kWeightEdge = 5.0 / 18.0;
  static constexpr double kWeightMid = 8.0 / 18.0;
  const auto m_count = grid.size();
  const double h = grid.spacing();
  const double log_norm = std::lgamma(alpha) + std::lgamma(beta) - std::lgamma(alpha + beta);
  auto pdf = [&](double x) {
    return std::exp((alpha - 1.0) * std::log(x) + (beta - 1.0) * std::log1p(-x) - log_norm);
  };
  for (std::size_t m = 1; m + 1 < m_count; ++m) {
    const double c = grid.point(m);
    const double half = 0.5 * h;
    const double avg = kWeightEdge * pdf(c - kNode * half) + kWeightMid * pdf(c) +
                       kWeightEdge * pdf(c + kNode * half);
    out[m] = avg;
  }
  out[0] = boost::math::ibeta(alpha, beta, h) / h;
  out[m_count - 1] = boost::math::ibetac(alpha, beta, 1.0 - h) / h;
  normalize_in_place(grid, out, "beta density");
}

}  // namespace tiltdid
