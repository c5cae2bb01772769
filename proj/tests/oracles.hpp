// Independent loop-based oracles shared by unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hti/review_interaction.hpp"
#include "hti/tensor.hpp"

namespace hti::testing {

// Straight-line reimplementation with explicit loops and no shared helpers.
struct LoopResult {
  std::vector<double> d_user, d_item, delta_user, delta_item, beta_user, beta_item;
};

inline std::vector<double> loop_softmax(const std::vector<double>& s, const Mask& mask) {
  std::vector<double> out(s.size(), 0.0);
  double mx = -INFINITY;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (mask[i]) mx = std::max(mx, s[i]);
  }
  double z = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (mask[i]) z += std::exp(s[i] - mx);
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (mask[i]) out[i] = std::exp(s[i] - mx) / z;
  }
  return out;
}

inline LoopResult loop_aggregate(const MatrixRM& U, const MatrixRM& I, const Mask& um, const Mask& im, const ParamTape& t,
                                 const InteractionParams& ids) {
  const std::size_t m = static_cast<std::size_t>(U.rows());
  const std::size_t n = static_cast<std::size_t>(I.rows());
  const std::size_t k = static_cast<std::size_t>(U.cols());
  auto W = [&](ParamId id, std::size_t r, std::size_t c) { return t.value(id)[r * t.value(id).cols() + c]; };
  auto V = [&](ParamId id, std::size_t i) { return t.value(id)[i]; };

  std::vector<double> a(m, 0.0), b(n, 0.0);
  std::vector<bool> a_set(m, false), b_set(n, false);
  for (std::size_t x = 0; x < m; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      if (!um[x] || !im[y]) continue;
      double sq = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double diff = U(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(c)) -
                            I(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(c));
        sq += diff * diff;
      }
      const double e = std::sqrt(sq);
      if (!a_set[x] || e < a[x]) {
        a[x] = e;
        a_set[x] = true;
      }
      if (!b_set[y] || e < b[y]) {
        b[y] = e;
        b_set[y] = true;
      }
    }
  }
  std::vector<double> na(m), nb(n);
  for (std::size_t x = 0; x < m; ++x) na[x] = -a[x];
  for (std::size_t y = 0; y < n; ++y) nb[y] = -b[y];
  LoopResult r;
  r.delta_user = loop_softmax(na, um);
  r.delta_item = loop_softmax(nb, im);
  std::vector<double> p(k, 0.0), q(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t x = 0; x < m; ++x) p[c] += r.delta_user[x] * U(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(c));
    for (std::size_t y = 0; y < n; ++y) q[c] += r.delta_item[y] * I(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(c));
  }

  auto side = [&](const MatrixRM& R, const Mask& mask, const std::vector<double>& guide, const SideAttentionParams& s,
                  std::vector<double>& beta) {
    const std::size_t rows = static_cast<std::size_t>(R.rows());
    const std::size_t h = t.value(s.v).size();
    std::vector<double> gamma(rows, 0.0);
    for (std::size_t x = 0; x < rows; ++x) {
      for (std::size_t j = 0; j < h; ++j) {
        double z = V(s.b, j);
        for (std::size_t c = 0; c < k; ++c) {
          z += W(s.w_guide, c, j) * guide[c] + W(s.w_review, c, j) * R(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(c));
        }
        gamma[x] += V(s.v, j) * std::tanh(z);
      }
    }
    beta = loop_softmax(gamma, mask);
    std::vector<double> out(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t x = 0; x < rows; ++x) out[c] += beta[x] * R(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(c));
    }
    return out;
  };
  const auto s = side(U, um, q, ids.user, r.beta_user);
  const auto tt = side(I, im, p, ids.item, r.beta_item);

  auto gate = [&](const std::vector<double>& init, const std::vector<double>& inter) {
    std::vector<double> out(k);
    for (std::size_t j = 0; j < k; ++j) {
      double z = V(ids.gate.b, j);
      for (std::size_t c = 0; c < k; ++c) z += W(ids.gate.w_initial, c, j) * init[c] + W(ids.gate.w_intermediate, c, j) * inter[c];
      const double g = 1.0 / (1.0 + std::exp(-z));
      out[j] = g * init[j] + (1.0 - g) * inter[j];
    }
    return out;
  };
  r.d_user = gate(p, s);
  r.d_item = gate(q, tt);
  return r;
}

}  // namespace hti::testing
