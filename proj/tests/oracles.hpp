#pragma once

// Plain-double reference computations used by unit and acceptance tests.
// Nothing here touches the autodiff graph.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

namespace cfine::oracle {

using Rows = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

/// Top `count` unmasked positions by full sort on (-score, position).
inline std::vector<std::size_t> top_by_sort(const std::vector<double>& s, const std::vector<bool>& masked,
                                            std::size_t count) {
  std::vector<std::pair<double, std::size_t>> keyed;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (masked.empty() || !masked[i]) keyed.emplace_back(-s[i], i);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count && i < keyed.size(); ++i) out.push_back(keyed[i].second);
  return out;
}

/// Calls f(subset) for every size-k subset of {0..n-1}, ascending.
template <class F>
void for_each_subset(std::size_t n, std::size_t k, F&& f) {
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    f(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

/// One direction of fine-grained matching by exhaustive search: each query
/// keeps the size-k subset of candidates whose cosine sum is largest, i.e.
/// the k best by cosine, and scores cos(query, mean of that subset).
inline double matched_direction(const Rows& queries, const Rows& candidates, std::size_t k) {
  double total = 0.0;
  for (const auto& q : queries) {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_set;
    for_each_subset(candidates.size(), k, [&](const std::vector<std::size_t>& set) {
      double s = 0.0;
      for (auto j : set) s += cosine(q, candidates[j]);
      if (s > best) {
        best = s;
        best_set = set;
      }
    });
    std::vector<double> pooled(q.size(), 0.0);
    for (auto j : best_set)
      for (std::size_t c = 0; c < q.size(); ++c) pooled[c] += candidates[j][c] / static_cast<double>(k);
    total += cosine(q, pooled);
  }
  return total;
}

inline double fcd(const Rows& patches, const Rows& words, std::size_t k) {
  return matched_direction(words, patches, k) + matched_direction(patches, words, k);
}

inline double softmax_pool(const std::vector<double>& s) {
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0, acc = 0.0;
  for (double v : s) {
    z += std::exp(v - mx);
    acc += std::exp(v - mx) * v;
  }
  return acc / z;
}

inline double cfr(const std::vector<double>& v_g, const Rows& v_sel, const std::vector<double>& t_g,
                  const Rows& t_sel) {
  std::vector<double> iw, ps;
  for (const auto& w : t_sel) iw.push_back(dot(v_g, w));
  for (const auto& p : v_sel) ps.push_back(dot(t_g, p));
  return 0.5 * (softmax_pool(iw) + softmax_pool(ps));
}

}  // namespace cfine::oracle
