#include "toilcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "toilcast/errors.hpp"

namespace toilcast::metrics {

namespace {

void check_lengths(const char* what, std::size_t a, std::size_t b) {
  if (a != b) {
    throw ValidationError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) +
                          ")");
  }
  if (a == 0) throw ValidationError(std::string(what) + ": empty input");
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ValidationError("quantile level " + std::to_string(alpha) + " is outside (0, 1)");
  }
}

void check_bounds(std::span<const double> lower, std::span<const double> upper) {
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (lower[i] > upper[i]) {
      throw ValidationError("crossed interval bounds at index " + std::to_string(i) +
                            "; apply enforce_non_crossing first");
    }
  }
}

}  // namespace

LossKind LossKind::quantile(std::vector<double> levels) {
  LossKind k{Tag::quantile, std::move(levels)};
  k.validate();
  return k;
}

void LossKind::validate() const {
  if (tag == Tag::quantile && alphas.empty()) throw ValidationError("quantile loss needs at least one level");
  for (double a : alphas) check_alpha(a);
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    if (!(alphas[i] > alphas[i - 1])) throw ValidationError("quantile levels must be strictly increasing");
  }
}

double mae(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths("mae", y.size(), y_hat.size());
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - y_hat[i]);
  return s / static_cast<double>(y.size());
}

double mse(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths("mse", y.size(), y_hat.size());
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  return s / static_cast<double>(y.size());
}

double pinball(double y, double y_hat, double alpha) {
  check_alpha(alpha);
  const double u = y - y_hat;
  return std::max(alpha * u, (alpha - 1.0) * u);
}

double mql(std::span<const double> y, std::span<const double> y_hat, double alpha) {
  check_lengths("mql", y.size(), y_hat.size());
  check_alpha(alpha);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += alpha * std::max(y[i] - y_hat[i], 0.0) + (1.0 - alpha) * std::max(y_hat[i] - y[i], 0.0);
  }
  return s / static_cast<double>(y.size());
}

double mql(std::span<const double> y, const std::vector<std::vector<double>>& y_hat, std::span<const double> alphas) {
  if (alphas.empty() || y_hat.size() != alphas.size()) {
    throw ValidationError("mql: one prediction vector per quantile level is required");
  }
  double s = 0.0;
  for (std::size_t q = 0; q < alphas.size(); ++q) s += mql(y, y_hat[q], alphas[q]);
  return s / static_cast<double>(alphas.size());
}

double picp(std::span<const double> y, std::span<const double> lower, std::span<const double> upper) {
  check_lengths("picp", y.size(), lower.size());
  check_lengths("picp", y.size(), upper.size());
  check_bounds(lower, upper);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < y.size(); ++i) inside += (lower[i] <= y[i] && y[i] <= upper[i]) ? 1 : 0;
  return static_cast<double>(inside) / static_cast<double>(y.size());
}

double mean_interval_width(std::span<const double> lower, std::span<const double> upper) {
  check_lengths("mean_interval_width", lower.size(), upper.size());
  check_bounds(lower, upper);
  double s = 0.0;
  for (std::size_t i = 0; i < lower.size(); ++i) s += upper[i] - lower[i];
  return s / static_cast<double>(lower.size());
}

IntervalSummary summarize_interval(std::span<const double> y, std::span<const double> lower,
                                   std::span<const double> upper) {
  return {picp(y, lower, upper), mean_interval_width(lower, upper)};
}

}  // namespace toilcast::metrics
