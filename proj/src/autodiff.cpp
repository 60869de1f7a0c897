#include "structkit/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace structkit::nn {

void Node::accumulate(const Matrix& g) {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  grad += g;
}

Tensor Tensor::constant(Matrix v) {
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->value = std::move(v);
  return t;
}

Tensor Tensor::parameter(Matrix v) {
  Tensor t = constant(std::move(v));
  t.node_->requires_grad = true;
  return t;
}

Matrix Tensor::grad() const {
  if (node_->grad.rows() != node_->value.rows() || node_->grad.cols() != node_->value.cols()) {
    return Matrix::Zero(node_->value.rows(), node_->value.cols());
  }
  return node_->grad;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("item() on a non-scalar tensor");
  return node_->value(0, 0);
}

void Tensor::zero_grad() const { node_->grad.resize(0, 0); }

Tensor Tensor::from_op(Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> fn) {
  Tensor t = constant(std::move(value));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return t;
  t.node_->requires_grad = true;
  t.node_->is_leaf = false;
  t.node_->parents.reserve(inputs.size());
  for (auto& in : inputs) t.node_->parents.push_back(in.node_);
  t.node_->backward_fn = std::move(fn);
  return t;
}

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("backward() needs a scalar");
  if (!requires_grad()) return;
  // iterative post-order DFS for a topological order
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->is_leaf) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  }
  node_->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf && (*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

namespace {

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  // Row by row so each output row depends only on its input row, bit for
  // bit; blocked GEMM kernels round rows differently by position.
  Matrix out(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) out.row(i).noalias() = a.value().row(i) * b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return Tensor::from_op(a.value() + b.value(), {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (parent(n, i).requires_grad) parent(n, i).accumulate(n.grad);
    }
  });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return Tensor::from_op(a.value() - b.value(), {a, b}, [](Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
    if (parent(n, 1).requires_grad) parent(n, 1).accumulate(-n.grad);
  });
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return Tensor::from_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
  });
}

Tensor operator*(const Tensor& a, double s) {
  return Tensor::from_op(a.value() * s, {a}, [s](Node& n) { parent(n, 0).accumulate(n.grad * s); });
}

Tensor operator-(const Tensor& a) { return a * -1.0; }

Tensor add_scalar(const Tensor& a, double s) {
  return Tensor::from_op(a.value().array() + s, {a}, [](Node& n) { parent(n, 0).accumulate(n.grad); });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw std::invalid_argument("add_row: bad bias shape");
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return Tensor::from_op(std::move(out), {x, bias}, [](Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
    if (parent(n, 1).requires_grad) parent(n, 1).accumulate(n.grad.colwise().sum());
  });
}

Tensor mul_rows(const Tensor& x, const Tensor& w) {
  if (w.cols() != 1 || w.rows() != x.rows()) throw std::invalid_argument("mul_rows: bad weight shape");
  Matrix out = x.value().array().colwise() * w.value().col(0).array();
  return Tensor::from_op(std::move(out), {x, w}, [](Node& n) {
    Node& px = parent(n, 0);
    Node& pw = parent(n, 1);
    if (px.requires_grad) {
      Matrix g = n.grad.array().colwise() * pw.value.col(0).array();
      px.accumulate(g);
    }
    if (pw.requires_grad) pw.accumulate(n.grad.cwiseProduct(px.value).rowwise().sum());
  });
}

Tensor sub_col(const Tensor& x, const Tensor& v) {
  if (v.cols() != 1 || v.rows() != x.rows()) throw std::invalid_argument("sub_col: bad shape");
  Matrix out = x.value().colwise() - v.value().col(0);
  return Tensor::from_op(std::move(out), {x, v}, [](Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
    if (parent(n, 1).requires_grad) parent(n, 1).accumulate(-n.grad.rowwise().sum());
  });
}

Tensor relu(const Tensor& x) {
  return Tensor::from_op(x.value().cwiseMax(0.0), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    px.accumulate((px.value.array() > 0.0).select(n.grad, 0.0));
  });
}

Tensor tanh(const Tensor& x) {
  Matrix out = x.value().array().tanh();
  return Tensor::from_op(std::move(out), {x}, [](Node& n) {
    parent(n, 0).accumulate(n.grad.array() * (1.0 - n.value.array().square()));
  });
}

Tensor softplus(const Tensor& x) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  Matrix out = x.value().unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  return Tensor::from_op(std::move(out), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    Matrix s = px.value.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    px.accumulate(n.grad.cwiseProduct(s));
  });
}

Tensor sigmoid(const Tensor& x) {
  Matrix out = x.value().unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return Tensor::from_op(std::move(out), {x}, [](Node& n) {
    parent(n, 0).accumulate(n.grad.array() * n.value.array() * (1.0 - n.value.array()));
  });
}

Tensor square(const Tensor& x) {
  return Tensor::from_op(x.value().array().square(), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    px.accumulate(2.0 * n.grad.cwiseProduct(px.value));
  });
}

Tensor abs(const Tensor& x) {
  return Tensor::from_op(x.value().cwiseAbs(), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    px.accumulate(n.grad.cwiseProduct(px.value.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); })));
  });
}

Tensor log(const Tensor& x) {
  return Tensor::from_op(x.value().array().log(), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    px.accumulate(n.grad.cwiseQuotient(px.value));
  });
}

Tensor sum(const Tensor& x) {
  return Tensor::from_op(Matrix::Constant(1, 1, x.value().sum()), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    px.accumulate(Matrix::Constant(px.value.rows(), px.value.cols(), n.grad(0, 0)));
  });
}

Tensor mean(const Tensor& x) {
  const double count = static_cast<double>(x.value().size());
  return sum(x) * (1.0 / count);
}

Tensor row_sum(const Tensor& x) {
  return Tensor::from_op(x.value().rowwise().sum(), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    px.accumulate(n.grad.col(0).replicate(1, px.value.cols()));
  });
}

Tensor row_min(const Tensor& x) {
  const Matrix& v = x.value();
  std::vector<Eigen::Index> arg(v.rows());
  Matrix out(v.rows(), 1);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    Eigen::Index k = 0;
    for (Eigen::Index j = 1; j < v.cols(); ++j) {
      if (v(i, j) < v(i, k)) k = j;
    }
    arg[i] = k;
    out(i, 0) = v(i, k);
  }
  return Tensor::from_op(std::move(out), {x}, [arg = std::move(arg)](Node& n) {
    Node& px = parent(n, 0);
    Matrix g = Matrix::Zero(px.value.rows(), px.value.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, arg[i]) = n.grad(i, 0);
    px.accumulate(g);
  });
}

Tensor logsumexp_rows(const Tensor& x) {
  const Matrix& v = x.value();
  Matrix out(v.rows(), 1);
  Matrix soft(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (v.row(i).array() - m).exp();
    const double s = e.sum();
    out(i, 0) = m + std::log(s);
    soft.row(i) = e / s;
  }
  return Tensor::from_op(std::move(out), {x}, [soft = std::move(soft)](Node& n) {
    Matrix g = soft.array().colwise() * n.grad.col(0).array();
    parent(n, 0).accumulate(g);
  });
}

Tensor log_softmax_rows(const Tensor& x) { return sub_col(x, logsumexp_rows(x)); }

Tensor softmax_rows(const Tensor& x) {
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const Eigen::RowVectorXd e = (v.row(i).array() - v.row(i).maxCoeff()).exp();
    out.row(i) = e / e.sum();
  }
  return Tensor::from_op(std::move(out), {x}, [](Node& n) {
    const Matrix& s = n.value;
    const Eigen::VectorXd dot = n.grad.cwiseProduct(s).rowwise().sum();
    Matrix g = s.array() * (n.grad.colwise() - dot).array();
    parent(n, 0).accumulate(g);
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> starts;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    starts.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return Tensor::from_op(std::move(out), parts, [starts = std::move(starts)](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      Node& p = parent(n, i);
      if (p.requires_grad) p.accumulate(n.grad.middleCols(starts[i], p.value.cols()));
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> starts;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    starts.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return Tensor::from_op(std::move(out), parts, [starts = std::move(starts)](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      Node& p = parent(n, i);
      if (p.requires_grad) p.accumulate(n.grad.middleRows(starts[i], p.value.rows()));
    }
  });
}

Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > x.cols()) throw std::invalid_argument("slice_cols: out of range");
  return Tensor::from_op(x.value().middleCols(start, count), {x}, [start, count](Node& n) {
    Node& px = parent(n, 0);
    Matrix g = Matrix::Zero(px.value.rows(), px.value.cols());
    g.middleCols(start, count) = n.grad;
    px.accumulate(g);
  });
}

Tensor gather_rows(const Tensor& x, std::span<const Eigen::Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.value().row(rows[i]);
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  return Tensor::from_op(std::move(out), {x}, [idx = std::move(idx)](Node& n) {
    Node& px = parent(n, 0);
    Matrix g = Matrix::Zero(px.value.rows(), px.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    px.accumulate(g);
  });
}

Tensor repeat_rows(const Tensor& x, Eigen::Index times) {
  Matrix out(x.rows() * times, x.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = x.value().row(i / times);
  return Tensor::from_op(std::move(out), {x}, [times](Node& n) {
    Node& px = parent(n, 0);
    Matrix g = Matrix::Zero(px.value.rows(), px.value.cols());
    for (Eigen::Index i = 0; i < n.grad.rows(); ++i) g.row(i / times) += n.grad.row(i);
    px.accumulate(g);
  });
}

Tensor segment_max(const Tensor& x, std::span<const Eigen::Index> offsets) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows()) {
    throw std::invalid_argument("segment_max: offsets must cover all rows");
  }
  const Eigen::Index segments = static_cast<Eigen::Index>(offsets.size()) - 1;
  Matrix out(segments, x.cols());
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> arg(segments, x.cols());
  for (Eigen::Index s = 0; s < segments; ++s) {
    if (offsets[s + 1] <= offsets[s]) throw std::invalid_argument("segment_max: empty segment");
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Index best = offsets[s];
      for (Eigen::Index r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        if (x.value()(r, c) > x.value()(best, c)) best = r;
      }
      arg(s, c) = best;
      out(s, c) = x.value()(best, c);
    }
  }
  return Tensor::from_op(std::move(out), {x}, [arg = std::move(arg)](Node& n) {
    Node& px = parent(n, 0);
    Matrix g = Matrix::Zero(px.value.rows(), px.value.cols());
    for (Eigen::Index s = 0; s < arg.rows(); ++s) {
      for (Eigen::Index c = 0; c < arg.cols(); ++c) g(arg(s, c), c) += n.grad(s, c);
    }
    px.accumulate(g);
  });
}

Tensor segment_max(const Tensor& x, Eigen::Index segment_length) {
  if (x.rows() % segment_length != 0) throw std::invalid_argument("segment_max: ragged rows");
  std::vector<Eigen::Index> offsets;
  for (Eigen::Index r = 0; r <= x.rows(); r += segment_length) offsets.push_back(r);
  return segment_max(x, offsets);
}

Tensor segment_softmax(const Tensor& x, Eigen::Index len) {
  if (x.cols() != 1 || x.rows() % len != 0) throw std::invalid_argument("segment_softmax: bad shape");
  Matrix out(x.rows(), 1);
  for (Eigen::Index s = 0; s < x.rows(); s += len) {
    const auto seg = x.value().col(0).segment(s, len);
    const Eigen::VectorXd e = (seg.array() - seg.maxCoeff()).exp();
    out.col(0).segment(s, len) = e / e.sum();
  }
  return Tensor::from_op(std::move(out), {x}, [len](Node& n) {
    Matrix g(n.value.rows(), 1);
    for (Eigen::Index s = 0; s < n.value.rows(); s += len) {
      const auto sv = n.value.col(0).segment(s, len);
      const auto gv = n.grad.col(0).segment(s, len);
      const double dot = sv.dot(gv);
      g.col(0).segment(s, len) = sv.array() * (gv.array() - dot);
    }
    parent(n, 0).accumulate(g);
  });
}

Tensor segment_sum(const Tensor& x, Eigen::Index len) {
  if (x.rows() % len != 0) throw std::invalid_argument("segment_sum: ragged rows");
  Matrix out = Matrix::Zero(x.rows() / len, x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r / len) += x.value().row(r);
  return Tensor::from_op(std::move(out), {x}, [len](Node& n) {
    Node& px = parent(n, 0);
    Matrix g(px.value.rows(), px.value.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) = n.grad.row(r / len);
    px.accumulate(g);
  });
}

namespace {

// Row-major rotation entries of a unit quaternion and their Jacobian
// d entry / d (w, x, y, z).
void quat_rotation_jacobian(double w, double x, double y, double z, double* r,
                            Eigen::Matrix<double, 9, 4>& jac) {
  r[0] = 1 - 2 * (y * y + z * z);
  r[1] = 2 * (x * y - w * z);
  r[2] = 2 * (x * z + w * y);
  r[3] = 2 * (x * y + w * z);
  r[4] = 1 - 2 * (x * x + z * z);
  r[5] = 2 * (y * z - w * x);
  r[6] = 2 * (x * z - w * y);
  r[7] = 2 * (y * z + w * x);
  r[8] = 1 - 2 * (x * x + y * y);
  jac << 0, 0, -4 * y, -4 * z,
      -2 * z, 2 * y, 2 * x, -2 * w,
      2 * y, 2 * z, 2 * w, 2 * x,
      2 * z, 2 * y, 2 * x, 2 * w,
      0, -4 * x, 0, -4 * z,
      -2 * x, -2 * w, 2 * z, 2 * y,
      -2 * y, 2 * z, -2 * w, 2 * x,
      2 * x, 2 * w, 2 * z, 2 * y,
      0, -4 * x, -4 * y, 0;
}

}  // namespace

Tensor quat_to_rotation_rows(const Tensor& q) {
  if (q.cols() != 4) throw std::invalid_argument("quat_to_rotation_rows: expected n×4");
  const Eigen::Index n = q.rows();
  Matrix out(n, 9);
  // chain rule through normalization: d u / d q = (I − u uᵀ) / |q|
  std::vector<Eigen::Matrix<double, 9, 4>> jacobians(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector4d raw = q.value().row(i).transpose();
    const double norm = raw.norm();
    auto& jac = jacobians[static_cast<std::size_t>(i)];
    if (!(norm >= 1e-8)) {
      out.row(i) << 1, 0, 0, 0, 1, 0, 0, 0, 1;
      jac.setZero();
      continue;
    }
    const Eigen::Vector4d u = raw / norm;
    double r[9];
    Eigen::Matrix<double, 9, 4> ju;
    quat_rotation_jacobian(u[0], u[1], u[2], u[3], r, ju);
    for (int k = 0; k < 9; ++k) out(i, k) = r[k];
    const Eigen::Matrix4d dn = (Eigen::Matrix4d::Identity() - u * u.transpose()) / norm;
    jac = ju * dn;
  }
  return Tensor::from_op(std::move(out), {q}, [jacobians = std::move(jacobians)](Node& nd) {
    Matrix g(nd.grad.rows(), 4);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      g.row(i) = (jacobians[static_cast<std::size_t>(i)].transpose() * nd.grad.row(i).transpose()).transpose();
    }
    parent(nd, 0).accumulate(g);
  });
}

Tensor set_distance_rows(const Tensor& r, std::span<const RotationEquivalenceSet* const> sets) {
  if (r.cols() != 9 || static_cast<std::size_t>(r.rows()) != sets.size()) {
    throw std::invalid_argument("set_distance_rows: expected one set per n×9 row");
  }
  const Eigen::Index n = r.rows();
  Matrix out(n, 1);
  Matrix diff(n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    Mat3 pred;
    for (int k = 0; k < 9; ++k) pred(k / 3, k % 3) = r.value()(i, k);
    const auto& set = *sets[static_cast<std::size_t>(i)];
    const std::size_t best = nearest_equivalent(pred, set);
    const Mat3 d = pred - set.elements[best];
    out(i, 0) = d.squaredNorm() / 9.0;
    for (int k = 0; k < 9; ++k) diff(i, k) = d(k / 3, k % 3);
  }
  return Tensor::from_op(std::move(out), {r}, [diff = std::move(diff)](Node& nd) {
    Matrix g = diff.array().colwise() * (nd.grad.col(0).array() * (2.0 / 9.0));
    parent(nd, 0).accumulate(g);
  });
}

Tensor chamfer_rows(const Tensor& vertices, std::span<const std::array<Vec3, 8>> targets) {
  if (vertices.cols() != 24 || static_cast<std::size_t>(vertices.rows()) != targets.size()) {
    throw std::invalid_argument("chamfer_rows: expected n×24 and n targets");
  }
  const Eigen::Index n = vertices.rows();
  Matrix out(n, 1);
  Matrix grad(n, 24);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::array<Vec3, 8> p;
    for (int j = 0; j < 8; ++j) p[j] = vertices.value().row(i).segment<3>(3 * j).transpose();
    const auto& t = targets[static_cast<std::size_t>(i)];
    Eigen::Matrix<double, 8, 3> g = Eigen::Matrix<double, 8, 3>::Zero();
    double acc = 0.0;
    // predicted -> target
    for (int j = 0; j < 8; ++j) {
      int best = 0;
      for (int k = 1; k < 8; ++k) {
        if ((p[j] - t[k]).squaredNorm() < (p[j] - t[best]).squaredNorm()) best = k;
      }
      const Vec3 d = p[j] - t[best];
      acc += d.squaredNorm() / 8.0;
      g.row(j) += (2.0 / 8.0) * d.transpose();
    }
    // target -> predicted
    for (int k = 0; k < 8; ++k) {
      int best = 0;
      for (int j = 1; j < 8; ++j) {
        if ((p[j] - t[k]).squaredNorm() < (p[best] - t[k]).squaredNorm()) best = j;
      }
      const Vec3 d = p[best] - t[k];
      acc += d.squaredNorm() / 8.0;
      g.row(best) += (2.0 / 8.0) * d.transpose();
    }
    out(i, 0) = acc;
    for (int j = 0; j < 8; ++j) grad.row(i).segment<3>(3 * j) = g.row(j);
  }
  return Tensor::from_op(std::move(out), {vertices}, [grad = std::move(grad)](Node& nd) {
    Matrix g = grad.array().colwise() * nd.grad.col(0).array();
    parent(nd, 0).accumulate(g);
  });
}

}  // namespace structkit::nn
