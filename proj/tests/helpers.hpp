#pragma once

// Independent reference computations used as oracles by the test suites.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ttgp/tensor_train.hpp"

namespace testutil {

using ttgp::Index;

/// Calls fn(idx) for every 1-based multi-index, first index fastest.
inline void for_each_index(const std::vector<Index>& modes, const std::function<void(const std::vector<Index>&)>& fn) {
  std::vector<Index> idx(modes.size(), 1);
  while (true) {
    fn(idx);
    std::size_t k = 0;
    while (k < modes.size() && idx[k] == modes[k]) idx[k++] = 1;
    if (k == modes.size()) return;
    ++idx[k];
  }
}

/// Entry of a TT by explicit summation over every rank-index path.
inline double naive_entry(const ttgp::TensorTrain& tt, const std::vector<Index>& one_based) {
  const Index d = tt.order();
  std::function<double(Index, Index)> walk = [&](Index k, Index a) -> double {
    if (k == d) return 1.0;
    const ttgp::Core& c = tt.core(k);
    double s = 0.0;
    for (Index b = 0; b < c.r_right(); ++b) s += c(a, one_based[static_cast<std::size_t>(k)] - 1, b) * walk(k + 1, b);
    return s;
  };
  return walk(0, 0);
}

/// Dense values (first index fastest) of a TT by naive summation.
inline std::vector<double> naive_full(const ttgp::TensorTrain& tt) {
  std::vector<double> out;
  for_each_index(tt.mode_sizes(), [&](const std::vector<Index>& idx) { out.push_back(naive_entry(tt, idx)); });
  return out;
}

inline std::vector<double> dense_of(const std::vector<Index>& modes,
                                    const std::function<double(const std::vector<Index>&)>& f) {
  std::vector<double> out;
  for_each_index(modes, [&](const std::vector<Index>& idx) { out.push_back(f(idx)); });
  return out;
}

inline double norm(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

inline double diff_norm(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double rel_error(const std::vector<double>& approx, const std::vector<double>& exact) {
  const double n = norm(exact);
  return n > 0 ? diff_norm(approx, exact) / n : diff_norm(approx, exact);
}

/// Rank of the k-th unfolding of a dense tensor by a plain SVD.
inline Index unfolding_rank(const std::vector<Index>& modes, const std::vector<double>& values, std::size_t k,
                            double rel_tol = 1e-10) {
  Index rows = 1;
  for (std::size_t j = 0; j < k; ++j) rows *= modes[j];
  const Index cols = static_cast<Index>(values.size()) / rows;
  const Eigen::Map<const Eigen::MatrixXd> m(values.data(), rows, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

inline double grid_point(Index i, Index n) { return n > 1 ? static_cast<double>(i - 1) / static_cast<double>(n - 1) : 0.5; }

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace testutil
