#include "defl/aggregation.hpp"

namespace defl {

std::string to_string(AggregationRule rule) {
  switch (rule) {
    case AggregationRule::kFedAvg:
      return "fedavg";
    case AggregationRule::kKrum:
      return "krum";
    case AggregationRule::kMultiKrum:
      return "multi_krum";
  }
  return "unknown";
}

AggregationRule parse_aggregation_rule(const std::string& name) {
  if (name == "fedavg" || name == "FEDAVG") return AggregationRule::kFedAvg;
  if (name == "krum" || name == "KRUM") return AggregationRule::kKrum;
  if (name == "multi_krum" || name == "MULTI_KRUM") return AggregationRule::kMultiKrum;
  throw ConfigError("unknown aggregation rule '" + name + "'");
}

double eta(int n, int f) {
  if (f < 0 || n <= 2 * f + 2) {
    throw ParameterError("eta(n, f) requires n > 2f + 2, got n=" + std::to_string(n) + " f=" + std::to_string(f));
  }
  const double nd = n;
  const double fd = f;
  const double ratio = (fd * (nd - fd - 2) + fd * fd * (nd - fd - 1)) / (nd - 2 * fd - 2);
  return std::sqrt(2 * (nd - fd + ratio));
}

bool bft_margin_ok(int n, int f, int d, double sigma_grad, double grad_norm) {
  return eta(n, f) * std::sqrt(static_cast<double>(d)) * sigma_grad < grad_norm;
}

}  // namespace defl
