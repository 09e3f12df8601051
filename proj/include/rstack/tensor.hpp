#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <string>
#include <vector>

namespace rstack {

using Scalar = double;
using Array = Eigen::ArrayXd;  // flat storage, row-major element order

std::string shape_str(const std::vector<int>& shape);
Eigen::Index shape_numel(const std::vector<int>& shape);

// Dense 64-bit value with a persistent gradient accumulator. Parameters and
// inputs are Tensors; intermediate activations live on a Tape. The grad array
// accumulates across backward passes until zero_grad() is called.
struct Tensor {
  std::vector<int> shape;
  Array data;
  Array grad;  // empty until first needed, then always data.size()

  Tensor() = default;
  Tensor(std::vector<int> shape_in, Array data_in);

  static Tensor zeros(std::vector<int> shape_in);
  static Tensor scalar(Scalar v);
  static Tensor row_vector(const std::vector<Scalar>& v);
  static Tensor row_vector(std::initializer_list<Scalar> v);

  Eigen::Index numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }

  // rank-2 accessors; dim(i) works for any rank
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  bool has_grad() const { return grad.size() == data.size() && data.size() > 0; }
  void ensure_grad();
  void zero_grad();
};

}  // namespace rstack
