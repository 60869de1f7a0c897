#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "structkit/geometry.hpp"

namespace structkit::nn {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;  // same shape as value once touched by a backward pass
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Adds g into grad, allocating it on first use.
  void accumulate(const Matrix& g);
};

/// fp64 matrix value with reverse-mode gradient tracking.
///
/// Handles share their node: copying a Tensor aliases the same value and
/// gradient. Leaves created with parameter() accumulate gradients across
/// backward passes until zero_grad(); interior nodes are recomputed per
/// forward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix v);
  static Tensor parameter(Matrix v);
  static Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Zero matrix of the right shape if no gradient has reached this node.
  Matrix grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  /// Seeds d(this)/d(this) = 1 for a 1x1 tensor and propagates to every
  /// reachable node that requires a gradient.
  void backward() const;
  void zero_grad() const;

  const std::shared_ptr<Node>& node() const { return node_; }

  static Tensor from_op(Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> fn);

 private:
  std::shared_ptr<Node> node_;
};

// Elementwise and linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);  // elementwise
Tensor operator*(const Tensor& a, double s);
inline Tensor operator*(double s, const Tensor& a) { return a * s; }
Tensor operator-(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
/// x (n×c) + bias (1×c) broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
/// x (n×c) scaled row-wise by w (n×1).
Tensor mul_rows(const Tensor& x, const Tensor& w);
/// x (n×c) minus v (n×1) broadcast over columns.
Tensor sub_col(const Tensor& x, const Tensor& v);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Per-row sum, n×1.
Tensor row_sum(const Tensor& x);
/// Per-row minimum, n×1; gradient routes to the first minimizing column.
Tensor row_min(const Tensor& x);
/// Per-row log Σ exp, n×1.
Tensor logsumexp_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

// Shape manipulation.
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count);
Tensor gather_rows(const Tensor& x, std::span<const Eigen::Index> rows);
/// Row i of the output is row i / times of x (each row repeated `times` times).
Tensor repeat_rows(const Tensor& x, Eigen::Index times);

// Segment operations over consecutive row blocks. `offsets` has one more
// entry than there are segments; segment s spans rows [offsets[s], offsets[s+1]).
Tensor segment_max(const Tensor& x, std::span<const Eigen::Index> offsets);
Tensor segment_max(const Tensor& x, Eigen::Index segment_length);
/// Softmax of an n×1 column within fixed-length segments.
Tensor segment_softmax(const Tensor& x, Eigen::Index segment_length);
Tensor segment_sum(const Tensor& x, Eigen::Index segment_length);

// Rotation-specific fused ops.

/// Row-wise quaternion (w, x, y, z) -> row-major rotation matrix (n×9).
/// A row with norm below 1e-8 maps to the identity with zero gradient.
Tensor quat_to_rotation_rows(const Tensor& q);

/// Row-wise Min-of-N distance of a row-major rotation (n×9) to its
/// equivalence set; gradient flows to the nearest element (first on ties).
Tensor set_distance_rows(const Tensor& r, std::span<const RotationEquivalenceSet* const> sets);

/// Row-wise box chamfer: rows hold 8 vertices (n×24, xyz per vertex) and
/// are compared with fixed target vertex sets.
Tensor chamfer_rows(const Tensor& vertices, std::span<const std::array<Vec3, 8>> targets);

}  // namespace structkit::nn
