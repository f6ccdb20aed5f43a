#pragma once

// Slow reference implementations that share no code with the library
// beyond the data types.

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "sandpile/sandpile.hpp"

namespace oracle {

using namespace sandpile;

/// Dense Laplacian from the adjacency lists alone.
inline Eigen::MatrixXd dense_laplacian(const VolumeGraph& v) {
  const auto n = static_cast<Eigen::Index>(v.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (SiteId x = 0; x < v.size(); ++x) {
    a(x, x) = v.full_degree();
    for (SiteId y : v.neighbors(x)) a(x, y) = -1;
  }
  return a;
}

/// Topples one uniformly chosen unstable site at a time.
inline std::pair<std::vector<Height>, std::vector<ToppleCount>> random_order_stabilize(const VolumeGraph& v,
                                                                                        std::vector<Height> h,
                                                                                        std::mt19937_64& rng) {
  std::vector<ToppleCount> counts(v.size(), 0);
  const Height big = v.full_degree();
  for (;;) {
    std::vector<SiteId> unstable;
    for (SiteId x = 0; x < v.size(); ++x)
      if (h[x] > big) unstable.push_back(x);
    if (unstable.empty()) return {h, counts};
    const SiteId x = unstable[std::uniform_int_distribution<std::size_t>(0, unstable.size() - 1)(rng)];
    h[x] -= big;
    ++counts[x];
    for (SiteId y : v.neighbors(x)) ++h[y];
  }
}

/// Recurrence by the boundary-addition test: c is recurrent iff adding one
/// grain per missing neighbor at every site and stabilizing returns c, and
/// then every site topples exactly once.
inline bool recurrent_by_identity(const VolumeGraph& v, const std::vector<Height>& c) {
  std::vector<Height> h = c;
  for (SiteId x = 0; x < v.size(); ++x) h[x] += v.full_degree() - static_cast<Height>(v.degree(x));
  std::mt19937_64 rng(1);
  auto [out, counts] = random_order_stabilize(v, h, rng);
  return out == c;
}

/// Every stable configuration, odometer order with site 0 fastest.
inline std::vector<std::vector<Height>> all_stable(const VolumeGraph& v) {
  std::vector<std::vector<Height>> out;
  std::vector<Height> h(v.size(), 1);
  const Height top = v.full_degree();
  for (;;) {
    out.push_back(h);
    std::size_t i = 0;
    while (i < h.size() && h[i] == top) h[i++] = 1;
    if (i == h.size()) return out;
    ++h[i];
  }
}

inline std::vector<std::vector<Height>> brute_recurrent(const VolumeGraph& v) {
  std::vector<std::vector<Height>> out;
  for (auto& h : all_stable(v))
    if (recurrent_by_identity(v, h)) out.push_back(h);
  return out;
}

}  // namespace oracle
