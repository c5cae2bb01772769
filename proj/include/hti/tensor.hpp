// Dense tensors and the named parameter registry shared by every module.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hti {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;
using VecMap = Eigen::Map<Vec>;
using ConstVecMap = Eigen::Map<const Vec>;

// Validity flags (1 = valid). std::vector<bool> is avoided so masks can be spans.
using Mask = std::vector<std::uint8_t>;

// Row-major dense tensor. Two-dimensional views treat the first axis as rows
// and flatten the remaining axes into columns.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  MatMap matrix();
  ConstMatMap matrix() const;
  VecMap vector();
  ConstVecMap vector() const;

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct ParamId {
  std::size_t index = 0;
};

// One gradient tensor per registered parameter, in registration order.
class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  Tensor& operator[](ParamId id) { return grads_[id.index]; }
  const Tensor& operator[](ParamId id) const { return grads_[id.index]; }
  Tensor& at(std::size_t i) { return grads_[i]; }
  const Tensor& at(std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void accumulate(const GradientSet& other);
  double squared_norm() const;
  void scale(double factor);

 private:
  std::vector<Tensor> grads_;
};

// Ordered registry of named parameters with accumulated gradients.
// `frozen_rows` leading rows of a parameter never receive gradient or
// regularization (the padding embedding row).
class ParamTape {
 public:
  ParamId add(std::string name, std::vector<std::size_t> shape, std::size_t frozen_rows = 0);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t frozen_rows(std::size_t i) const { return frozen_rows_[i]; }
  std::optional<ParamId> find(const std::string& name) const;

  Tensor& value(ParamId id) { return values_[id.index]; }
  const Tensor& value(ParamId id) const { return values_[id.index]; }
  Tensor& value_at(std::size_t i) { return values_[i]; }
  const Tensor& value_at(std::size_t i) const { return values_[i]; }

  GradientSet& grads() { return grads_; }
  const GradientSet& grads() const { return grads_; }
  Tensor& grad(ParamId id) { return grads_[id]; }

  GradientSet make_gradient_buffer() const;
  void zero_grad() { grads_.zero(); }
  // Clears gradient entries in frozen rows of `grads`.
  void mask_frozen(GradientSet& grads) const;
  // Number of frozen scalar entries at the start of parameter i.
  std::size_t frozen_count(std::size_t i) const;
  std::size_t parameter_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<std::size_t> frozen_rows_;
  std::vector<Tensor> values_;
  GradientSet grads_;
};

}  // namespace hti
