#include "sdefim/observations.hpp"

#include <algorithm>
#include <numeric>

#include "sdefim/error.hpp"

namespace sdefim {

ObservationSet ObservationSet::select(std::span<const Eigen::Index> rows) const {
  ObservationSet out;
  out.dim = dim;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.y.resize(n, dim);
  out.dy.resize(n, dim);
  out.dy2.resize(n, dim);
  out.dtau.resize(n);
  out.path_index.resize(rows.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index src = rows[r];
    if (src < 0 || src >= size()) throw DataError("observation row out of range");
    out.y.row(r) = y.row(src);
    out.dy.row(r) = dy.row(src);
    out.dy2.row(r) = dy2.row(src);
    out.dtau[r] = dtau[src];
    out.path_index[r] = path_index.empty() ? 0 : path_index[src];
  }
  return out;
}

void ObservationSet::validate() const {
  const Eigen::Index n = size();
  if (y.cols() != dim || dy.rows() != n || dy.cols() != dim || dy2.rows() != n || dy2.cols() != dim ||
      dtau.size() != n) {
    throw DimensionError("observation set arrays have inconsistent shapes");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(dtau[i] > 0.0)) throw DataError("observation gaps must be positive");
  }
}

ObservationBuild to_observation_set(const PathBundle& bundle) {
  ObservationBuild out;
  const int d = bundle.dim;
  Eigen::Index total = 0;
  for (const auto& p : bundle.paths) {
    if (p.length() >= 2) total += p.length() - 1;
  }
  auto& s = out.set;
  s.dim = d;
  s.y.resize(total, d);
  s.dy.resize(total, d);
  s.dy2.resize(total, d);
  s.dtau.resize(total);
  s.path_index.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < bundle.paths.size(); ++k) {
    const auto& p = bundle.paths[k];
    if (p.length() < 2) {
      ++out.skipped_paths;
      continue;
    }
    for (int i = 0; i + 1 < p.length(); ++i, ++row) {
      s.y.row(row) = p.states.row(i);
      s.dy.row(row) = p.states.row(i + 1) - p.states.row(i);
      s.dy2.row(row) = s.dy.row(row).array().square();
      s.dtau[row] = p.times[i + 1] - p.times[i];
      s.path_index.push_back(static_cast<int>(k));
    }
  }
  return out;
}

ObservationSet subsample(const ObservationSet& set, Eigen::Index count, RandomStream& rng) {
  const Eigen::Index n = set.size();
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  if (count >= n) return set.select(rows);
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto j = static_cast<Eigen::Index>(rng.uniform_int(i, n - 1));
    std::swap(rows[i], rows[j]);
  }
  rows.resize(static_cast<std::size_t>(count));
  return set.select(rows);
}

}  // namespace sdefim
