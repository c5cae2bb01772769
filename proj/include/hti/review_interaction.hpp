// Review-level interaction: distance-based initial attention, cross-guided
// intermediate attention and the shared gate that fuses the two.

#pragma once

#include <span>
#include <vector>

#include "hti/tensor.hpp"

namespace hti {

// One side's relevance attention: gamma_k = v^T tanh(W_guide^T g + W_review^T d_k + b).
struct SideAttentionParams {
  ParamId w_guide;   // k x h
  ParamId w_review;  // k x h
  ParamId v;         // h
  ParamId b;         // h
};

struct GateParams {
  ParamId w_initial;       // k x k
  ParamId w_intermediate;  // k x k
  ParamId b;               // k
};

struct InteractionParams {
  SideAttentionParams user;  // W_u, W_vu, v_1, b_u
  SideAttentionParams item;  // W_v, W_uv, v_2, b_v
  GateParams gate;           // shared by both sides
};

// `hidden` is the width of the relevance attention layer.
InteractionParams register_interaction(ParamTape& tape, std::size_t latent_dim, std::size_t hidden);

// e(k,t) = ||user_k - item_t||_2; +inf when either review is invalid.
MatrixRM pairwise_distances(const MatrixRM& user_reps, const MatrixRM& item_reps, std::span<const std::uint8_t> user_mask,
                            std::span<const std::uint8_t> item_mask);

struct InitialResult {
  Vec p;  // user side
  Vec q;  // item side
  std::vector<double> delta_user, delta_item;
  std::vector<double> min_user, min_item;  // a_k, b_t (0 when the counterpart is empty)
  std::vector<Eigen::Index> argmin_user, argmin_item;  // -1 when undefined
};

// a_k = min_t e(k,t), delta = masked_softmax(-a), p = sum delta_k d_k; the
// item side uses column minima. If the counterpart side has no valid review
// the minima are taken as 0, which makes the weights uniform.
InitialResult initial_representations(const MatrixRM& user_reps, const MatrixRM& item_reps, const MatrixRM& distances,
                                      std::span<const std::uint8_t> user_mask, std::span<const std::uint8_t> item_mask);

struct IntermediateResult {
  Vec s;
  std::vector<double> gamma;
  std::vector<double> beta;
  MatrixRM hidden;  // rows x h, tanh activations
};

IntermediateResult intermediate_representation(const Vec& guide, const MatrixRM& reps, std::span<const std::uint8_t> mask,
                                               const ParamTape& params, const SideAttentionParams& ids);

struct GateResult {
  Vec out;
  Vec g;
};

// g = sigmoid(W1^T initial + W2^T intermediate + b); out = g*initial + (1-g)*intermediate.
GateResult gate_fuse(const Vec& initial, const Vec& intermediate, const ParamTape& params, const GateParams& ids);

struct InteractionTrace {
  MatrixRM distances;
  std::vector<double> delta_user, delta_item;
  std::vector<double> beta_user, beta_item;
  Vec gate_user, gate_item;
};

struct AggregateResult {
  Vec d_user;
  Vec d_item;
  InitialResult initial;
  IntermediateResult inter_user;  // s_i, guided by q_j
  IntermediateResult inter_item;  // t_j, guided by p_i
  GateResult gate_user;
  GateResult gate_item;
  MatrixRM distances;

  InteractionTrace trace() const;
};

AggregateResult aggregate(const MatrixRM& user_reps, const MatrixRM& item_reps, std::span<const std::uint8_t> user_mask,
                          std::span<const std::uint8_t> item_mask, const ParamTape& params,
                          const InteractionParams& ids);

// Accumulates parameter gradients and the gradients w.r.t. both review
// representation matrices (into `duser`, `ditem`).
void aggregate_backward(const AggregateResult& fwd, const MatrixRM& user_reps, const MatrixRM& item_reps,
                        std::span<const std::uint8_t> user_mask, std::span<const std::uint8_t> item_mask,
                        const Vec& dd_user, const Vec& dd_item, const ParamTape& params, const InteractionParams& ids,
                        GradientSet& grads, MatrixRM& duser, MatrixRM& ditem);

// Fused-operation count of the distance matrix: m*n*(3k-1)
// (k subtractions, k squares, k-1 additions per entry; the root is not counted).
std::size_t distance_flops(std::size_t m, std::size_t n, std::size_t k);
// Fused-operation count of one full aggregate() call with hidden width h.
std::size_t interaction_flops(std::size_t m, std::size_t n, std::size_t k, std::size_t h);

}  // namespace hti
