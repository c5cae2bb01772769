#include "hti/word_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hti/numerics.hpp"

namespace hti {

namespace {

void zero_masked_rows(MatrixRM& m, std::span<const std::uint8_t> mask) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) m.row(i).setZero();
  }
}

MatrixRM relu_mask_grad(const MatrixRM& pre, const MatrixRM& dout) {
  return (pre.array() > 0.0).select(dout, MatrixRM::Zero(dout.rows(), dout.cols()));
}

}  // namespace

WordEncoderParams register_word_encoder(ParamTape& tape, const WordEncoderDims& d) {
  if (d.vocab_size == 0 || d.embed_dim == 0 || d.conv1_maps == 0 || d.latent_dim == 0) {
    throw std::invalid_argument("word encoder dimensions must be positive");
  }
  WordEncoderParams ids;
  ids.embedding = tape.add("word.embedding", {d.vocab_size + 1, d.embed_dim}, 1);
  ids.conv1_small_w = tape.add("word.conv1_k3.w", {d.conv1_maps, kConv1SmallWidth * d.embed_dim});
  ids.conv1_small_b = tape.add("word.conv1_k3.b", {d.conv1_maps});
  ids.conv1_large_w = tape.add("word.conv1_k5.w", {d.conv1_maps, kConv1LargeWidth * d.embed_dim});
  ids.conv1_large_b = tape.add("word.conv1_k5.b", {d.conv1_maps});
  ids.conv2_w = tape.add("word.conv2.w", {d.latent_dim, kConv2Width * 2 * d.conv1_maps});
  ids.conv2_b = tape.add("word.conv2.b", {d.latent_dim});
  ids.attn_w = tape.add("word.attn.w", {2 * d.latent_dim, d.latent_dim});
  ids.attn_b = tape.add("word.attn.b", {d.latent_dim});
  return ids;
}

WordEncoding encode_words(std::span<const std::int32_t> token_ids, std::span<const std::uint8_t> mask,
                          const ParamTape& params, const WordEncoderParams& ids) {
  const Tensor& embedding = params.value(ids.embedding);
  const auto p = static_cast<Eigen::Index>(token_ids.size());
  const auto dim = static_cast<Eigen::Index>(embedding.cols());
  const ConstMatMap table = embedding.matrix();

  WordEncoding enc;
  enc.embedded = MatrixRM::Zero(p, dim);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (mask[static_cast<std::size_t>(i)]) enc.embedded.row(i) = table.row(token_ids[static_cast<std::size_t>(i)]);
  }

  ConvResult small = conv1d_same(enc.embedded, params.value(ids.conv1_small_w), params.value(ids.conv1_small_b));
  ConvResult large = conv1d_same(enc.embedded, params.value(ids.conv1_large_w), params.value(ids.conv1_large_b));
  const Eigen::Index k1 = small.pre.cols();
  enc.pre1.resize(p, 2 * k1);
  enc.pre1 << small.pre, large.pre;
  zero_masked_rows(enc.pre1, mask);
  enc.out1 = enc.pre1.cwiseMax(0.0);

  ConvResult second = conv1d_same(enc.out1, params.value(ids.conv2_w), params.value(ids.conv2_b));
  enc.pre2 = std::move(second.pre);
  zero_masked_rows(enc.pre2, mask);
  enc.out2 = enc.pre2.cwiseMax(0.0);
  return enc;
}

void encode_words_backward(const WordEncoding& enc, std::span<const std::int32_t> token_ids,
                           std::span<const std::uint8_t> mask, const MatrixRM& dwords, const ParamTape& params,
                           const WordEncoderParams& ids, GradientSet& grads) {
  MatrixRM dpre2 = relu_mask_grad(enc.pre2, dwords);
  zero_masked_rows(dpre2, mask);

  MatrixRM dout1 = MatrixRM::Zero(enc.out1.rows(), enc.out1.cols());
  conv1d_same_backward(enc.out1, params.value(ids.conv2_w), dpre2, &dout1, grads[ids.conv2_w], grads[ids.conv2_b]);
  MatrixRM dpre1 = relu_mask_grad(enc.pre1, dout1);
  zero_masked_rows(dpre1, mask);

  const Eigen::Index k1 = dpre1.cols() / 2;
  const MatrixRM dpre_small = dpre1.leftCols(k1);
  const MatrixRM dpre_large = dpre1.rightCols(k1);
  MatrixRM dembedded = MatrixRM::Zero(enc.embedded.rows(), enc.embedded.cols());
  conv1d_same_backward(enc.embedded, params.value(ids.conv1_small_w), dpre_small, &dembedded,
                       grads[ids.conv1_small_w], grads[ids.conv1_small_b]);
  conv1d_same_backward(enc.embedded, params.value(ids.conv1_large_w), dpre_large, &dembedded,
                       grads[ids.conv1_large_w], grads[ids.conv1_large_b]);

  MatMap dtable = grads[ids.embedding].matrix();
  for (Eigen::Index i = 0; i < dembedded.rows(); ++i) {
    const auto pos = static_cast<std::size_t>(i);
    if (mask[pos] && token_ids[pos] != 0) dtable.row(token_ids[pos]) += dembedded.row(i);
  }
}

PairQuery pair_query(const Vec& user_latent, const Vec& item_latent, const ParamTape& params,
                     const WordEncoderParams& ids) {
  PairQuery q;
  q.concat.resize(user_latent.size() + item_latent.size());
  q.concat << user_latent, item_latent;
  const Vec pre = params.value(ids.attn_w).matrix().transpose() * q.concat + params.value(ids.attn_b).vector();
  q.m = pre.array().tanh();
  return q;
}

Vec pair_query_backward(const PairQuery& query, const Vec& dm, const ParamTape& params, const WordEncoderParams& ids,
                        GradientSet& grads) {
  const Vec dpre = dm.array() * (1.0 - query.m.array().square());
  grads[ids.attn_w].matrix().noalias() += query.concat * dpre.transpose();
  grads[ids.attn_b].vector() += dpre;
  return params.value(ids.attn_w).matrix() * dpre;
}

ReviewRep pair_attention_summarize(const MatrixRM& words, std::span<const std::uint8_t> mask, const Vec& query) {
  ReviewRep rep;
  const Vec scores = words * query;
  rep.alpha = masked_softmax(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), mask);
  rep.valid = std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
  rep.d = weighted_row_sum(words, rep.alpha);
  return rep;
}

ReviewRep pair_attention_summarize(const MatrixRM& words, std::span<const std::uint8_t> mask, const Vec& user_latent,
                                   const Vec& item_latent, const ParamTape& params, const WordEncoderParams& ids) {
  return pair_attention_summarize(words, mask, pair_query(user_latent, item_latent, params, ids).m);
}

void pair_attention_backward(const MatrixRM& words, std::span<const std::uint8_t> mask, const Vec& query,
                             const ReviewRep& rep, const Vec& dd, MatrixRM& dwords, Vec& dquery) {
  if (!rep.valid) return;
  const Vec dalpha = words * dd;
  const std::vector<double> dscores = masked_softmax_backward(
      rep.alpha, std::span<const double>(dalpha.data(), static_cast<std::size_t>(dalpha.size())), mask);
  for (Eigen::Index i = 0; i < words.rows(); ++i) {
    const auto pos = static_cast<std::size_t>(i);
    if (!mask[pos]) continue;
    dwords.row(i) += rep.alpha[pos] * dd.transpose() + dscores[pos] * query.transpose();
    dquery += dscores[pos] * words.row(i).transpose();
  }
}

ReviewRep mean_pool_words(const MatrixRM& words, std::span<const std::uint8_t> mask) {
  ReviewRep rep;
  rep.alpha.assign(mask.size(), 0.0);
  const auto count = std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
  rep.valid = count > 0;
  if (rep.valid) {
    const double w = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) rep.alpha[i] = w;
    }
  }
  rep.d = weighted_row_sum(words, rep.alpha);
  return rep;
}

ReviewRep max_pool_words(const MatrixRM& words, std::span<const std::uint8_t> mask) {
  ReviewRep rep;
  rep.alpha.assign(mask.size(), 0.0);
  rep.d = Vec::Zero(words.cols());
  rep.valid = std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
  if (!rep.valid) return rep;
  const double share = 1.0 / static_cast<double>(words.cols());
  for (Eigen::Index j = 0; j < words.cols(); ++j) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < words.rows(); ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || words(i, j) > words(best, j)) best = i;
    }
    rep.d[j] = words(best, j);
    rep.alpha[static_cast<std::size_t>(best)] += share;
  }
  return rep;
}

void mean_pool_backward(std::span<const std::uint8_t> mask, const ReviewRep& rep, const Vec& dd, MatrixRM& dwords) {
  for (Eigen::Index i = 0; i < dwords.rows(); ++i) {
    const auto pos = static_cast<std::size_t>(i);
    if (mask[pos]) dwords.row(i) += rep.alpha[pos] * dd.transpose();
  }
}

void max_pool_backward(const MatrixRM& words, std::span<const std::uint8_t> mask, const Vec& dd, MatrixRM& dwords) {
  for (Eigen::Index j = 0; j < words.cols(); ++j) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < words.rows(); ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || words(i, j) > words(best, j)) best = i;
    }
    if (best >= 0) dwords(best, j) += dd[j];
  }
}

}  // namespace hti
