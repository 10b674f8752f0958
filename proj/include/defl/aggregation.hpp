#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "defl/core.hpp"

namespace defl {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class AggregationRule { kFedAvg, kKrum, kMultiKrum };

std::string to_string(AggregationRule rule);
AggregationRule parse_aggregation_rule(const std::string& name);

template <typename Scalar>
struct ScoredCandidate {
  NodeId owner = 0;
  VectorX<Scalar> weights;
  Scalar score = 0;
};

/// Parameters of the Krum family. Unset k / neighborhood are derived from the
/// number of candidates actually available (m):
///   neighborhood = m - f_assumed - 2, k = m - f_assumed.
struct AggregationParams {
  int f_assumed = 0;
  std::optional<int> k;
  std::optional<int> neighborhood;
  std::optional<std::vector<double>> sample_sizes;

  int resolved_k(int m) const { return k ? *k : m - f_assumed; }
  int resolved_neighborhood(int m) const { return neighborhood ? *neighborhood : m - f_assumed - 2; }
  /// Smallest candidate count for which multi_krum's preconditions hold.
  bool feasible(int m) const {
    int kk = resolved_k(m);
    int nb = resolved_neighborhood(m);
    return kk >= 1 && nb >= 1 && m >= std::max(kk, nb + 1);
  }
};

namespace detail {

template <typename Scalar>
void check_dimensions(const std::vector<VectorX<Scalar>>& vs) {
  for (std::size_t i = 1; i < vs.size(); ++i) {
    if (vs[i].size() != vs[0].size()) {
      throw DimensionError("candidate " + std::to_string(i) + " has dimension " + std::to_string(vs[i].size()) +
                           ", expected " + std::to_string(vs[0].size()));
    }
  }
}

template <typename Scalar>
std::vector<NodeId> owners_or_indices(const std::vector<VectorX<Scalar>>& vs, const std::vector<NodeId>& owners) {
  if (owners.empty()) {
    std::vector<NodeId> ids(vs.size());
    std::iota(ids.begin(), ids.end(), NodeId{0});
    return ids;
  }
  if (owners.size() != vs.size()) throw ParameterError("owners and candidates differ in length");
  return owners;
}

// Candidate indices sorted by (score, owner, index).
template <typename Scalar>
std::vector<std::size_t> ranking(const std::vector<Scalar>& scores, const std::vector<NodeId>& owners) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    if (owners[a] != owners[b]) return owners[a] < owners[b];
    return a < b;
  });
  return order;
}

}  // namespace detail

/// Entry (i, j) = sum_c (vs[i][c] - vs[j][c])^2. Symmetric with a zero diagonal.
template <typename Scalar>
MatrixX<Scalar> pairwise_sq_dists(const std::vector<VectorX<Scalar>>& vs) {
  detail::check_dimensions(vs);
  const auto m = static_cast<Eigen::Index>(vs.size());
  MatrixX<Scalar> dist = MatrixX<Scalar>::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      dist(i, j) = dist(j, i) = (vs[i] - vs[j]).squaredNorm();
    }
  }
  return dist;
}

/// Krum score of each candidate: the sum of its `neighborhood` smallest
/// squared distances to the other candidates.
template <typename Scalar>
std::vector<Scalar> krum_scores(const std::vector<VectorX<Scalar>>& vs, int neighborhood) {
  const int m = static_cast<int>(vs.size());
  if (neighborhood < 1 || m < neighborhood + 1) {
    throw ParameterError("krum neighborhood " + std::to_string(neighborhood) + " needs at least " +
                         std::to_string(neighborhood + 1) + " candidates, got " + std::to_string(m));
  }
  const MatrixX<Scalar> dist = pairwise_sq_dists(vs);
  std::vector<Scalar> scores(m);
  std::vector<Scalar> row;
  for (int i = 0; i < m; ++i) {
    row.clear();
    for (int j = 0; j < m; ++j) {
      if (j != i) row.push_back(dist(i, j));
    }
    std::partial_sort(row.begin(), row.begin() + neighborhood, row.end());
    Scalar sum = 0;
    for (int j = 0; j < neighborhood; ++j) sum += row[j];
    scores[i] = sum;
  }
  return scores;
}

/// Minimum-score candidate; ties go to the smallest owner id.
template <typename Scalar>
ScoredCandidate<Scalar> krum_select(const std::vector<VectorX<Scalar>>& vs, const std::vector<NodeId>& owners,
                                    int neighborhood) {
  const auto ids = detail::owners_or_indices(vs, owners);
  const auto scores = krum_scores(vs, neighborhood);
  const auto best = detail::ranking(scores, ids).front();
  return {ids[best], vs[best], scores[best]};
}

/// Indices (into vs) of the k lowest-score candidates, best first.
template <typename Scalar>
std::vector<std::size_t> multi_krum_selection(const std::vector<VectorX<Scalar>>& vs, const std::vector<NodeId>& owners,
                                              const AggregationParams& params) {
  const int m = static_cast<int>(vs.size());
  const int k = params.resolved_k(m);
  const int nb = params.resolved_neighborhood(m);
  if (k < 1) throw ParameterError("multi-krum k must be positive");
  if (m < k) {
    throw InsufficientCandidatesError("multi-krum needs k=" + std::to_string(k) + " candidates, got " +
                                      std::to_string(m));
  }
  if (nb < 1 || m < nb + 1) {
    throw InsufficientCandidatesError("multi-krum neighborhood " + std::to_string(nb) + " needs " +
                                      std::to_string(nb + 1) + " candidates, got " + std::to_string(m));
  }
  const auto ids = detail::owners_or_indices(vs, owners);
  auto order = detail::ranking(krum_scores(vs, nb), ids);
  order.resize(static_cast<std::size_t>(k));
  return order;
}

/// Unweighted mean of the k lowest-score candidates. Summation runs in
/// ascending owner order so the result does not depend on input order.
template <typename Scalar>
VectorX<Scalar> multi_krum(const std::vector<VectorX<Scalar>>& vs, const std::vector<NodeId>& owners,
                           const AggregationParams& params) {
  auto chosen = multi_krum_selection(vs, owners, params);
  const auto ids = detail::owners_or_indices(vs, owners);
  std::sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
    return ids[a] != ids[b] ? ids[a] < ids[b] : a < b;
  });
  VectorX<Scalar> sum = VectorX<Scalar>::Zero(vs.front().size());
  for (auto i : chosen) sum += vs[i];
  return sum / static_cast<Scalar>(chosen.size());
}

/// Sample-size weighted average: sum_i s_i v_i / sum_i s_i.
template <typename Scalar>
VectorX<Scalar> fed_avg(const std::vector<VectorX<Scalar>>& vs, const std::vector<double>& sample_sizes) {
  if (vs.empty()) throw ParameterError("fed_avg needs at least one vector");
  if (vs.size() != sample_sizes.size()) throw ParameterError("fed_avg: sizes and vectors differ in length");
  detail::check_dimensions(vs);
  Scalar total = 0;
  VectorX<Scalar> sum = VectorX<Scalar>::Zero(vs.front().size());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (!(sample_sizes[i] > 0)) throw ParameterError("fed_avg: sample size must be positive");
    sum += static_cast<Scalar>(sample_sizes[i]) * vs[i];
    total += static_cast<Scalar>(sample_sizes[i]);
  }
  return sum / total;
}

template <typename Scalar>
VectorX<Scalar> fed_avg(const std::vector<VectorX<Scalar>>& vs) {
  return fed_avg(vs, std::vector<double>(vs.size(), 1.0));
}

/// Dispatch on the configured rule. FedAvg uses params.sample_sizes when set.
template <typename Scalar>
VectorX<Scalar> aggregate(AggregationRule rule, const std::vector<VectorX<Scalar>>& vs,
                          const std::vector<NodeId>& owners, const AggregationParams& params) {
  switch (rule) {
    case AggregationRule::kFedAvg:
      return params.sample_sizes ? fed_avg(vs, *params.sample_sizes) : fed_avg(vs);
    case AggregationRule::kKrum:
      return krum_select(vs, owners, params.resolved_neighborhood(static_cast<int>(vs.size()))).weights;
    case AggregationRule::kMultiKrum:
      return multi_krum(vs, owners, params);
  }
  throw ParameterError("unknown aggregation rule");
}

/// Byzantine resilience margin factor
///   sqrt(2 (n - f + (f (n-f-2) + f^2 (n-f-1)) / (n - 2f - 2))), defined for n > 2f + 2.
double eta(int n, int f);

/// True iff eta(n, f) * sqrt(d) * sigma_grad < grad_norm.
bool bft_margin_ok(int n, int f, int d, double sigma_grad, double grad_norm);

}  // namespace defl
