#include "annorefine/kde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "annorefine/errors.hpp"

namespace annorefine {
namespace {

double Quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double SilvermanBandwidth(std::span<const double> samples) {
  if (samples.empty()) throw InsufficientDataError("bandwidth of empty sample");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = samples.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = (Quantile(sorted, 0.75) - Quantile(sorted, 0.25)) / 1.34;

  double spread = std::min(sd, iqr);
  if (!(spread > 0.0)) spread = std::max(sd, iqr);
  if (!(spread > 0.0)) return 1e-3;
  return 0.9 * spread * std::pow(n, -0.2);
}

GaussianKde::GaussianKde(std::vector<double> samples, double bandwidth)
    : samples_(std::move(samples)), bandwidth_(bandwidth) {
  if (samples_.empty()) throw InsufficientDataError("KDE needs at least one sample");
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_)) {
    throw ConfigError("KDE bandwidth must be positive");
  }
}

double GaussianKde::Evaluate(double x) const {
  const double norm = 1.0 / (static_cast<double>(samples_.size()) * bandwidth_ *
                             std::sqrt(2.0 * std::numbers::pi));
  double sum = 0.0;
  for (double v : samples_) {
    const double u = (x - v) / bandwidth_;
    sum += std::exp(-0.5 * u * u);
  }
  return norm * sum;
}

double GaussianKde::Mode(int grid_points) const {
  const auto [lo_it, hi_it] = std::minmax_element(samples_.begin(), samples_.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (grid_points < 2 || hi == lo) return lo;
  const double step = (hi - lo) / (grid_points - 1);
  double best_x = lo;
  double best = -1.0;
  for (int i = 0; i < grid_points; ++i) {
    const double x = lo + step * i;
    const double f = Evaluate(x);
    if (f > best) {
      best = f;
      best_x = x;
    }
  }
  return best_x;
}

}  // namespace annorefine
