#pragma once

#include <span>
#include <vector>

namespace toilcast::metrics {

/// Training objective: point (mean absolute error) or averaged quantile loss.
struct LossKind {
  enum class Tag { point, quantile };
  Tag tag = Tag::point;
  std::vector<double> alphas;

  static LossKind point() { return {}; }
  static LossKind quantile(std::vector<double> levels);
  bool is_quantile() const { return tag == Tag::quantile; }
  void validate() const;
};

struct IntervalSummary {
  double picp = 0.0;        ///< fraction of truths inside [lower, upper]
  double mean_width = 0.0;  ///< [K]
};

double mae(std::span<const double> y, std::span<const double> y_hat);
double mse(std::span<const double> y, std::span<const double> y_hat);

/// max(α(y-ŷ), (α-1)(y-ŷ)).
double pinball(double y, double y_hat, double alpha);

/// Mean quantile loss at one level.
double mql(std::span<const double> y, std::span<const double> y_hat, double alpha);
/// Average of per-level MQLs; `y_hat[q]` holds the predictions for alphas[q].
double mql(std::span<const double> y, const std::vector<std::vector<double>>& y_hat, std::span<const double> alphas);

/// Inclusive coverage. Throws if any lower > upper.
double picp(std::span<const double> y, std::span<const double> lower, std::span<const double> upper);
double mean_interval_width(std::span<const double> lower, std::span<const double> upper);
IntervalSummary summarize_interval(std::span<const double> y, std::span<const double> lower,
                                   std::span<const double> upper);

}  // namespace toilcast::metrics
