#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace sdefim {

enum class BaseKernel { Linear, Rbf };

struct MmdConfig {
  int level = 5;
  BaseKernel base = BaseKernel::Rbf;
  /// RBF length scale; <= 0 selects the median heuristic.
  double bandwidth = 0.0;
  /// Pooled states used by the median heuristic (strided subsample).
  int median_sample = 1000;

  void validate() const;
};

nlohmann::json to_json(const MmdConfig& cfg);
MmdConfig mmd_config_from_json(const nlohmann::json& j);

/// Paths are L x d state matrices (rows in time order).
using PathStates = Eigen::MatrixXd;

/// Truncated signature kernel of two piecewise-linear paths, levels 0..level,
/// lifted through the base kernel. Requires a resolved bandwidth for RBF.
double signature_kernel(const PathStates& a, const PathStates& b, const MmdConfig& cfg);

/// Median pairwise Euclidean distance between pooled states.
double median_bandwidth(const std::vector<PathStates>& p, const std::vector<PathStates>& q, int max_states = 1000);

/// Copy of cfg with the bandwidth fixed (median heuristic if unset).
MmdConfig resolve_bandwidth(const MmdConfig& cfg, const std::vector<PathStates>& p, const std::vector<PathStates>& q);

/// Gram matrix over the concatenation [p..., q...].
Eigen::MatrixXd pooled_gram(const std::vector<PathStates>& p, const std::vector<PathStates>& q, const MmdConfig& cfg);

/// Unbiased two-sample MMD^2 for samples indexed into a pooled Gram matrix.
double mmd_from_gram(const Eigen::MatrixXd& gram, const std::vector<Eigen::Index>& x, const std::vector<Eigen::Index>& y);

struct MmdResult {
  double mmd2 = 0.0;
  double bandwidth = 0.0;
};

MmdResult mmd_unbiased(const std::vector<PathStates>& p, const std::vector<PathStates>& q, const MmdConfig& cfg);

struct PermutationTest {
  double mmd2 = 0.0;
  double bandwidth = 0.0;
  std::vector<double> null;  // statistic under random relabelings
  double null_mean() const;
  double null_sd() const;
  /// Empirical quantile of the null distribution.
  double null_quantile(double q) const;
  double p_value() const;
};

PermutationTest permutation_test(const std::vector<PathStates>& p, const std::vector<PathStates>& q,
                                 const MmdConfig& cfg, int permutations, std::uint64_t seed);

}  // namespace sdefim
