#include "hti/review_interaction.hpp"

#include <cmath>
#include <limits>

#include "hti/numerics.hpp"

namespace hti {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

SideAttentionParams register_side(ParamTape& tape, const std::string& prefix, std::size_t k, std::size_t h) {
  SideAttentionParams ids;
  ids.w_guide = tape.add(prefix + ".w_guide", {k, h});
  ids.w_review = tape.add(prefix + ".w_review", {k, h});
  ids.v = tape.add(prefix + ".v", {h});
  ids.b = tape.add(prefix + ".b", {h});
  return ids;
}

// Backward of s = sum beta_k d_k with beta = softmax(v^T tanh(Wg^T g + Wr^T d_k + b)).
void intermediate_backward(const IntermediateResult& fwd, const Vec& guide, const MatrixRM& reps,
                           std::span<const std::uint8_t> mask, const Vec& ds, const ParamTape& params,
                           const SideAttentionParams& ids, GradientSet& grads, Vec& dguide, MatrixRM& dreps) {
  const Eigen::Index rows = reps.rows();
  Vec dbeta = reps * ds;
  const std::vector<double> dgamma = masked_softmax_backward(fwd.beta, as_span(dbeta), mask);
  const Vec v = params.value(ids.v).vector();
  const ConstMatMap w_review = params.value(ids.w_review).matrix();
  Vec dpre_sum = Vec::Zero(v.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto pos = static_cast<std::size_t>(r);
    if (!mask[pos]) continue;
    dreps.row(r) += fwd.beta[pos] * ds.transpose();
    if (dgamma[pos] == 0.0) continue;
    const Vec hidden = fwd.hidden.row(r).transpose();
    grads[ids.v].vector() += dgamma[pos] * hidden;
    const Vec dpre = (dgamma[pos] * v).array() * (1.0 - hidden.array().square());
    grads[ids.w_review].matrix().noalias() += reps.row(r).transpose() * dpre.transpose();
    dreps.row(r) += (w_review * dpre).transpose();
    dpre_sum += dpre;
  }
  grads[ids.b].vector() += dpre_sum;
  grads[ids.w_guide].matrix().noalias() += guide * dpre_sum.transpose();
  dguide += params.value(ids.w_guide).matrix() * dpre_sum;
}

void gate_backward(const GateResult& fwd, const Vec& initial, const Vec& intermediate, const Vec& dout,
                   const ParamTape& params, const GateParams& ids, GradientSet& grads, Vec& dinitial,
                   Vec& dintermediate) {
  const Vec dg = dout.array() * (initial - intermediate).array();
  const Vec dz = dg.array() * fwd.g.array() * (1.0 - fwd.g.array());
  dinitial += dout.cwiseProduct(fwd.g) + params.value(ids.w_initial).matrix() * dz;
  dintermediate += (dout.array() * (1.0 - fwd.g.array())).matrix() + params.value(ids.w_intermediate).matrix() * dz;
  grads[ids.w_initial].matrix().noalias() += initial * dz.transpose();
  grads[ids.w_intermediate].matrix().noalias() += intermediate * dz.transpose();
  grads[ids.b].vector() += dz;
}

}  // namespace

InteractionParams register_interaction(ParamTape& tape, std::size_t latent_dim, std::size_t hidden) {
  InteractionParams ids;
  ids.user = register_side(tape, "inter.user", latent_dim, hidden);
  ids.item = register_side(tape, "inter.item", latent_dim, hidden);
  ids.gate.w_initial = tape.add("inter.gate.w_initial", {latent_dim, latent_dim});
  ids.gate.w_intermediate = tape.add("inter.gate.w_intermediate", {latent_dim, latent_dim});
  ids.gate.b = tape.add("inter.gate.b", {latent_dim});
  return ids;
}

MatrixRM pairwise_distances(const MatrixRM& user_reps, const MatrixRM& item_reps, std::span<const std::uint8_t> user_mask,
                            std::span<const std::uint8_t> item_mask) {
  MatrixRM e(user_reps.rows(), item_reps.rows());
  for (Eigen::Index k = 0; k < user_reps.rows(); ++k) {
    for (Eigen::Index t = 0; t < item_reps.rows(); ++t) {
      if (!user_mask[static_cast<std::size_t>(k)] || !item_mask[static_cast<std::size_t>(t)]) {
        e(k, t) = kInf;
      } else {
        e(k, t) = (user_reps.row(k) - item_reps.row(t)).norm();
      }
    }
  }
  return e;
}

InitialResult initial_representations(const MatrixRM& user_reps, const MatrixRM& item_reps, const MatrixRM& distances,
                                      std::span<const std::uint8_t> user_mask, std::span<const std::uint8_t> item_mask) {
  const auto m = static_cast<std::size_t>(user_reps.rows());
  const auto n = static_cast<std::size_t>(item_reps.rows());
  InitialResult r;
  r.min_user.assign(m, 0.0);
  r.min_item.assign(n, 0.0);
  r.argmin_user.assign(m, -1);
  r.argmin_item.assign(n, -1);
  for (std::size_t k = 0; k < m; ++k) {
    if (!user_mask[k]) continue;
    for (std::size_t t = 0; t < n; ++t) {
      if (!item_mask[t]) continue;
      const double e = distances(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t));
      if (r.argmin_user[k] < 0 || e < r.min_user[k]) {
        r.min_user[k] = e;
        r.argmin_user[k] = static_cast<Eigen::Index>(t);
      }
      if (r.argmin_item[t] < 0 || e < r.min_item[t]) {
        r.min_item[t] = e;
        r.argmin_item[t] = static_cast<Eigen::Index>(k);
      }
    }
  }
  std::vector<double> neg_a(m), neg_b(n);
  for (std::size_t k = 0; k < m; ++k) neg_a[k] = -r.min_user[k];
  for (std::size_t t = 0; t < n; ++t) neg_b[t] = -r.min_item[t];
  r.delta_user = masked_softmax(neg_a, user_mask);
  r.delta_item = masked_softmax(neg_b, item_mask);
  r.p = weighted_row_sum(user_reps, r.delta_user);
  r.q = weighted_row_sum(item_reps, r.delta_item);
  return r;
}

IntermediateResult intermediate_representation(const Vec& guide, const MatrixRM& reps, std::span<const std::uint8_t> mask,
                                               const ParamTape& params, const SideAttentionParams& ids) {
  IntermediateResult r;
  const Vec guide_term =
      params.value(ids.w_guide).matrix().transpose() * guide + params.value(ids.b).vector();
  MatrixRM pre = reps * params.value(ids.w_review).matrix();
  pre.rowwise() += guide_term.transpose();
  r.hidden = pre.array().tanh();
  const Vec gamma = r.hidden * params.value(ids.v).vector();
  r.gamma.assign(gamma.data(), gamma.data() + gamma.size());
  r.beta = masked_softmax(r.gamma, mask);
  r.s = weighted_row_sum(reps, r.beta);
  return r;
}

GateResult gate_fuse(const Vec& initial, const Vec& intermediate, const ParamTape& params, const GateParams& ids) {
  GateResult r;
  const Vec z = params.value(ids.w_initial).matrix().transpose() * initial +
                params.value(ids.w_intermediate).matrix().transpose() * intermediate + params.value(ids.b).vector();
  r.g = sigmoid(z);
  r.out = r.g.cwiseProduct(initial) + (1.0 - r.g.array()).matrix().cwiseProduct(intermediate);
  return r;
}

InteractionTrace AggregateResult::trace() const {
  InteractionTrace t;
  t.distances = distances;
  t.delta_user = initial.delta_user;
  t.delta_item = initial.delta_item;
  t.beta_user = inter_user.beta;
  t.beta_item = inter_item.beta;
  t.gate_user = gate_user.g;
  t.gate_item = gate_item.g;
  return t;
}

AggregateResult aggregate(const MatrixRM& user_reps, const MatrixRM& item_reps, std::span<const std::uint8_t> user_mask,
                          std::span<const std::uint8_t> item_mask, const ParamTape& params,
                          const InteractionParams& ids) {
  AggregateResult r;
  r.distances = pairwise_distances(user_reps, item_reps, user_mask, item_mask);
  r.initial = initial_representations(user_reps, item_reps, r.distances, user_mask, item_mask);
  r.inter_user = intermediate_representation(r.initial.q, user_reps, user_mask, params, ids.user);
  r.inter_item = intermediate_representation(r.initial.p, item_reps, item_mask, params, ids.item);
  r.gate_user = gate_fuse(r.initial.p, r.inter_user.s, params, ids.gate);
  r.gate_item = gate_fuse(r.initial.q, r.inter_item.s, params, ids.gate);
  r.d_user = r.gate_user.out;
  // An empty side has p = s = 0, so the gate already yields a zero vector.
  r.d_item = r.gate_item.out;
  return r;
}

void aggregate_backward(const AggregateResult& fwd, const MatrixRM& user_reps, const MatrixRM& item_reps,
                        std::span<const std::uint8_t> user_mask, std::span<const std::uint8_t> item_mask,
                        const Vec& dd_user, const Vec& dd_item, const ParamTape& params, const InteractionParams& ids,
                        GradientSet& grads, MatrixRM& duser, MatrixRM& ditem) {
  const Eigen::Index k = user_reps.cols();
  Vec dp = Vec::Zero(k), dq = Vec::Zero(k), ds = Vec::Zero(k), dt = Vec::Zero(k);
  gate_backward(fwd.gate_user, fwd.initial.p, fwd.inter_user.s, dd_user, params, ids.gate, grads, dp, ds);
  gate_backward(fwd.gate_item, fwd.initial.q, fwd.inter_item.s, dd_item, params, ids.gate, grads, dq, dt);

  intermediate_backward(fwd.inter_user, fwd.initial.q, user_reps, user_mask, ds, params, ids.user, grads, dq, duser);
  intermediate_backward(fwd.inter_item, fwd.initial.p, item_reps, item_mask, dt, params, ids.item, grads, dp, ditem);

  // p = sum delta_k d_k, delta = softmax(-a), a_k = e(k, argmin_k).
  const InitialResult& init = fwd.initial;
  const Vec ddelta_user = user_reps * dp;
  const Vec ddelta_item = item_reps * dq;
  const std::vector<double> dneg_a = masked_softmax_backward(init.delta_user, as_span(ddelta_user), user_mask);
  const std::vector<double> dneg_b = masked_softmax_backward(init.delta_item, as_span(ddelta_item), item_mask);

  auto distance_grad = [&](Eigen::Index u, Eigen::Index t, double de) {
    const double e = fwd.distances(u, t);
    if (de == 0.0 || !(e > 0.0)) return;
    const Eigen::RowVectorXd unit = (user_reps.row(u) - item_reps.row(t)) / e;
    duser.row(u) += de * unit;
    ditem.row(t) -= de * unit;
  };
  for (std::size_t u = 0; u < init.delta_user.size(); ++u) {
    if (!user_mask[u]) continue;
    duser.row(static_cast<Eigen::Index>(u)) += init.delta_user[u] * dp.transpose();
    if (init.argmin_user[u] >= 0) distance_grad(static_cast<Eigen::Index>(u), init.argmin_user[u], -dneg_a[u]);
  }
  for (std::size_t t = 0; t < init.delta_item.size(); ++t) {
    if (!item_mask[t]) continue;
    ditem.row(static_cast<Eigen::Index>(t)) += init.delta_item[t] * dq.transpose();
    if (init.argmin_item[t] >= 0) distance_grad(init.argmin_item[t], static_cast<Eigen::Index>(t), -dneg_b[t]);
  }
}

std::size_t distance_flops(std::size_t m, std::size_t n, std::size_t k) {
  return m * n * (3 * k - 1);
}

std::size_t interaction_flops(std::size_t m, std::size_t n, std::size_t k, std::size_t h) {
  std::size_t total = distance_flops(m, n, k) + m * n;          // plus one root per entry
  total += m * (n - 1) + n * (m - 1);                           // min-pooling comparisons
  total += (4 * m - 1) + (4 * n - 1);                           // negate, exp, sum, divide
  total += 2 * m * k + 2 * n * k;                               // p_i, q_j
  auto side = [k, h](std::size_t rows) {
    return 2 * k * h + h                                         // guide projection + bias
           + rows * (2 * k * h + h + h + 2 * h)                   // review projection, add, tanh, dot
           + (3 * rows - 1) + 2 * rows * k;                       // softmax and weighted sum
  };
  total += side(m) + side(n);
  total += 2 * (4 * k * k + 2 * k + k + 4 * k);                 // gate on both sides
  return total;
}

}  // namespace hti
