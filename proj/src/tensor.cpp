#include "rstack/tensor.hpp"

#include <utility>

#include "rstack/errors.hpp"

namespace rstack {

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Eigen::Index shape_numel(const std::vector<int>& shape) {
  Eigen::Index n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<int> shape_in, Array data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(std::vector<int> shape_in) {
  Array d = Array::Zero(shape_numel(shape_in));
  return Tensor(std::move(shape_in), std::move(d));
}

Tensor Tensor::scalar(Scalar v) {
  Array d(1);
  d[0] = v;
  return Tensor({1}, std::move(d));
}

Tensor Tensor::row_vector(const std::vector<Scalar>& v) {
  Array d(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) d[static_cast<Eigen::Index>(i)] = v[i];
  return Tensor({static_cast<int>(v.size())}, std::move(d));
}

Tensor Tensor::row_vector(std::initializer_list<Scalar> v) {
  return row_vector(std::vector<Scalar>(v));
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad = Array::Zero(data.size());
}

void Tensor::zero_grad() {
  if (grad.size() != data.size()) {
    grad = Array::Zero(data.size());
  } else {
    grad.setZero();
  }
}

}  // namespace rstack
