#include "hti/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace hti {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

std::size_t Tensor::rows() const { return shape_.empty() ? 1 : shape_.front(); }

std::size_t Tensor::cols() const {
  if (shape_.size() <= 1) return 1;
  return data_.size() / shape_.front();
}

MatMap Tensor::matrix() {
  if (shape_.size() == 1) return MatMap(data_.data(), static_cast<Eigen::Index>(shape_[0]), 1);
  return MatMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

ConstMatMap Tensor::matrix() const {
  if (shape_.size() == 1) return ConstMatMap(data_.data(), static_cast<Eigen::Index>(shape_[0]), 1);
  return ConstMatMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

VecMap Tensor::vector() { return VecMap(data_.data(), static_cast<Eigen::Index>(data_.size())); }

ConstVecMap Tensor::vector() const {
  return ConstVecMap(data_.data(), static_cast<Eigen::Index>(data_.size()));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void GradientSet::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void GradientSet::accumulate(const GradientSet& other) {
  if (other.grads_.size() != grads_.size()) {
    throw std::invalid_argument("gradient sets have different layouts");
  }
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i].vector() += other.grads_[i].vector();
}

double GradientSet::squared_norm() const {
  double total = 0.0;
  for (const auto& g : grads_) total += g.vector().squaredNorm();
  return total;
}

void GradientSet::scale(double factor) {
  for (auto& g : grads_) g.vector() *= factor;
}

ParamId ParamTape::add(std::string name, std::vector<std::size_t> shape, std::size_t frozen_rows) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  ParamId id{values_.size()};
  names_.push_back(std::move(name));
  frozen_rows_.push_back(frozen_rows);
  values_.emplace_back(shape);
  std::vector<Tensor> grads;
  grads.reserve(values_.size());
  for (std::size_t i = 0; i + 1 < values_.size(); ++i) grads.push_back(std::move(grads_.at(i)));
  grads.emplace_back(std::move(shape));
  grads_ = GradientSet(std::move(grads));
  return id;
}

std::optional<ParamId> ParamTape::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return ParamId{i};
  }
  return std::nullopt;
}

GradientSet ParamTape::make_gradient_buffer() const {
  std::vector<Tensor> grads;
  grads.reserve(values_.size());
  for (const auto& v : values_) grads.emplace_back(v.shape());
  return GradientSet(std::move(grads));
}

std::size_t ParamTape::frozen_count(std::size_t i) const {
  if (frozen_rows_[i] == 0) return 0;
  return frozen_rows_[i] * values_[i].cols();
}

void ParamTape::mask_frozen(GradientSet& grads) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const std::size_t n = frozen_count(i);
    for (std::size_t j = 0; j < n; ++j) grads.at(i)[j] = 0.0;
  }
}

std::size_t ParamTape::parameter_count() const {
  std::size_t total = 0;
  for (const auto& v : values_) total += v.size();
  return total;
}

}  // namespace hti
