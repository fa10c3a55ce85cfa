#pragma once

#include <span>
#include <vector>

namespace annorefine {

// Silverman's rule of thumb: 0.9 * min(sd, IQR / 1.34) * n^(-1/5).
// Falls back to the non-zero spread measure, and to 1e-3 for constant data.
double SilvermanBandwidth(std::span<const double> samples);

// Gaussian Parzen-window density estimate in one dimension.
class GaussianKde {
 public:
  // Throws InsufficientDataError on empty input and ConfigError on a
  // non-positive bandwidth.
  GaussianKde(std::vector<double> samples, double bandwidth);

  double bandwidth() const { return bandwidth_; }
  double Evaluate(double x) const;

  // Grid maximizer over `grid_points` evenly spaced points spanning
  // [min sample, max sample]; the lowest grid point wins ties.
  double Mode(int grid_points = 512) const;

 private:
  std::vector<double> samples_;
  double bandwidth_;
};

}  // namespace annorefine
