// Word-level module: embedding lookup, two convolution layers and the
// attention that summarizes a review conditioned on the user-item pair.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hti/tensor.hpp"

namespace hti {

struct WordEncoderDims {
  std::size_t vocab_size = 0;  // embedding has vocab_size + 1 rows (row 0 = padding)
  std::size_t embed_dim = 100;
  std::size_t conv1_maps = 50;  // maps per layer-1 kernel size
  std::size_t latent_dim = 32;  // layer-2 maps, equal to the latent-factor width
};

inline constexpr std::size_t kConv1SmallWidth = 3;
inline constexpr std::size_t kConv1LargeWidth = 5;
inline constexpr std::size_t kConv2Width = 5;

struct WordEncoderParams {
  ParamId embedding;  // (V+1) x dim, row 0 frozen at zero
  ParamId conv1_small_w, conv1_small_b;
  ParamId conv1_large_w, conv1_large_b;
  ParamId conv2_w, conv2_b;
  ParamId attn_w;  // 2k x k, applied as W^T [u; v]
  ParamId attn_b;  // k
};

WordEncoderParams register_word_encoder(ParamTape& tape, const WordEncoderDims& dims);

// Cached activations of one review.
struct WordEncoding {
  MatrixRM embedded;  // p x dim
  MatrixRM pre1;      // p x 2*k1, before relu
  MatrixRM out1;      // p x 2*k1
  MatrixRM pre2;      // p x k
  MatrixRM out2;      // p x k, the word vectors c_i
};

// Embedding -> conv {3,5} (concatenated, relu) -> conv 5 (relu). Masked
// positions are forced to zero after every layer.
WordEncoding encode_words(std::span<const std::int32_t> token_ids, std::span<const std::uint8_t> mask,
                          const ParamTape& params, const WordEncoderParams& ids);

// Backpropagates d(word vectors) into the convolution and embedding gradients.
void encode_words_backward(const WordEncoding& enc, std::span<const std::int32_t> token_ids,
                           std::span<const std::uint8_t> mask, const MatrixRM& dwords, const ParamTape& params,
                           const WordEncoderParams& ids, GradientSet& grads);

// Pair-specific query m = tanh(W^T [u; v] + b).
struct PairQuery {
  Vec concat;  // [u; v]
  Vec m;
};

PairQuery pair_query(const Vec& user_latent, const Vec& item_latent, const ParamTape& params,
                     const WordEncoderParams& ids);

// Adds the gradient of the query into W, b and returns (du, dv) stacked.
Vec pair_query_backward(const PairQuery& query, const Vec& dm, const ParamTape& params, const WordEncoderParams& ids,
                        GradientSet& grads);

struct ReviewRep {
  Vec d;
  bool valid = false;
  std::vector<double> alpha;  // per word position, 0 at masked positions
};

// d = sum_i alpha_i c_i with alpha = masked_softmax(m^T c_i). A fully masked
// review gives an invalid, zero representation.
ReviewRep pair_attention_summarize(const MatrixRM& words, std::span<const std::uint8_t> mask, const Vec& query);

// Convenience overload that builds the query from the latent factors.
ReviewRep pair_attention_summarize(const MatrixRM& words, std::span<const std::uint8_t> mask, const Vec& user_latent,
                                   const Vec& item_latent, const ParamTape& params, const WordEncoderParams& ids);

// Gradient of the attention summary w.r.t. the word vectors (accumulated into
// `dwords`) and the query (accumulated into `dquery`).
void pair_attention_backward(const MatrixRM& words, std::span<const std::uint8_t> mask, const Vec& query,
                             const ReviewRep& rep, const Vec& dd, MatrixRM& dwords, Vec& dquery);

// Uniform weights over unmasked positions, summed with the same routine as
// the attention path.
ReviewRep mean_pool_words(const MatrixRM& words, std::span<const std::uint8_t> mask);
// Per-coordinate maximum over unmasked positions. `alpha` holds the share of
// coordinates each position wins.
ReviewRep max_pool_words(const MatrixRM& words, std::span<const std::uint8_t> mask);

void mean_pool_backward(std::span<const std::uint8_t> mask, const ReviewRep& rep, const Vec& dd, MatrixRM& dwords);
void max_pool_backward(const MatrixRM& words, std::span<const std::uint8_t> mask, const Vec& dd, MatrixRM& dwords);

}  // namespace hti
