#include "structkit/nets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace structkit::nn {

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

Mlp::Mlp(std::vector<int> dims, Activation act, Rng& rng, bool zero_last) : dims_(std::move(dims)), act_(act) {
  if (dims_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
    const double gain = act_ == Activation::kRelu ? 2.0 : 1.0;
    const double sd = std::sqrt(gain / in);
    Matrix w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, sd);
    if (zero_last && l + 2 == dims_.size()) w.setZero();
    weights_.push_back(Tensor::parameter(std::move(w)));
    biases_.push_back(Tensor::parameter(Matrix::Zero(1, out)));
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.cols() != input_dim()) throw std::invalid_argument("Mlp input width mismatch");
  Tensor h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add_row(matmul(h, weights_[l]), biases_[l]);
    if (l + 1 < weights_.size()) h = act_ == Activation::kRelu ? relu(h) : tanh(h);
  }
  return h;
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

Standardizer Standardizer::identity(int dim) {
  return {Eigen::RowVectorXd::Zero(dim), Eigen::RowVectorXd::Ones(dim)};
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  s.mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - s.mean;
  s.scale = (centered.array().square().colwise().sum() / std::max<double>(1.0, x.rows())).sqrt();
  for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
    if (s.scale[i] < 1e-8) s.scale[i] = 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (mean.size() == 0) return x;
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

RotationLossKind rotation_loss_from_string(const std::string& name) {
  if (name == "mse") return RotationLossKind::kMse;
  if (name == "minn" || name == "minn-mse") return RotationLossKind::kMinN;
  if (name == "moe" || name == "moe-minn" || name == "moe-minn-mse") return RotationLossKind::kMoE;
  throw std::invalid_argument("unknown rotation loss: " + name);
}

std::string to_string(RotationLossKind k) {
  switch (k) {
    case RotationLossKind::kMse: return "mse";
    case RotationLossKind::kMinN: return "minn";
    case RotationLossKind::kMoE: return "moe";
  }
  return "moe";
}

namespace {

std::vector<int> chain(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> d{in};
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(out);
  return d;
}

// {in, widths...}: an encoder whose last layer is activated by the caller.
std::vector<int> stack(int in, const std::vector<int>& widths) {
  if (widths.empty()) throw std::invalid_argument("encoder needs at least one layer");
  std::vector<int> d{in};
  d.insert(d.end(), widths.begin(), widths.end());
  return d;
}

Tensor activate(const Tensor& x, Activation a) { return a == Activation::kRelu ? relu(x) : tanh(x); }

}  // namespace

OrientationHead::OrientationHead(const OrientationHeadConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.experts < 1) throw std::invalid_argument("orientation head needs at least one expert");
  Rng rng(seed);
  input = Standardizer::identity(cfg.input_dim);
  trunk_ = Mlp(stack(cfg.input_dim, cfg.trunk), cfg.activation, rng);
  const int width = trunk_.output_dim();
  for (int k = 0; k < cfg.experts; ++k) {
    branches_.emplace_back(std::vector<int>{width, cfg.branch_hidden, 5}, cfg.activation, rng, cfg.zero_last);
  }
}

OrientationHead::Output OrientationHead::forward(const Tensor& features) const {
  const Tensor x = Tensor::constant(input.apply(features.value()));
  // the trunk's last layer is linear inside Mlp; activate it here
  const Tensor h = activate(trunk_.forward(x), cfg_.activation);
  Output out;
  std::vector<Tensor> logits;
  for (const auto& b : branches_) {
    const Tensor o = b.forward(h);
    out.rotations.push_back(quat_to_rotation_rows(slice_cols(o, 0, 4)));
    logits.push_back(slice_cols(o, 4, 1));
  }
  out.logits = concat_cols(logits);
  return out;
}

std::vector<Tensor> OrientationHead::parameters() const {
  std::vector<Tensor> p = trunk_.parameters();
  for (const auto& b : branches_) {
    const auto bp = b.parameters();
    p.insert(p.end(), bp.begin(), bp.end());
  }
  return p;
}

std::vector<MoEPrediction> forward_orientation(const OrientationHead& head, const Matrix& features) {
  const auto out = head.forward(Tensor::constant(features));
  const Matrix probs = softmax_rows(out.logits).value();
  std::vector<MoEPrediction> preds(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    auto& p = preds[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < out.rotations.size(); ++k) {
      Mat3 r;
      for (int e = 0; e < 9; ++e) r(e / 3, e % 3) = out.rotations[k].value()(i, e);
      p.rotations.push_back(RotationMatrix::unchecked(r));
      p.probabilities.push_back(probs(i, static_cast<Eigen::Index>(k)));
    }
  }
  return preds;
}

MoEPrediction forward_orientation(const OrientationHead& head, const Eigen::VectorXd& feature) {
  return forward_orientation(head, Matrix(feature.transpose())).front();
}

Tensor orientation_loss(const OrientationHead::Output& out, std::span<const Mat3> labels,
                        std::span<const RotationEquivalenceSet* const> sets, RotationLossKind kind,
                        const LossConfig& cfg) {
  cfg.validate();
  if (kind == RotationLossKind::kMse) {
    Matrix target(static_cast<Eigen::Index>(labels.size()), 9);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (int e = 0; e < 9; ++e) target(static_cast<Eigen::Index>(i), e) = labels[i](e / 3, e % 3);
    }
    return mean(square(out.rotations[0] - Tensor::constant(std::move(target))));
  }
  std::vector<Tensor> d;
  for (const auto& r : out.rotations) d.push_back(set_distance_rows(r, sets));
  const Tensor dist = concat_cols(d);
  const Tensor l1 = row_min(dist);
  if (kind == RotationLossKind::kMinN || cfg.lambda == 0.0) return mean(l1);
  const double b = cfg.laplace_b;
  const Tensor loglik = add_scalar(logsumexp_rows(log_softmax_rows(out.logits) - dist * (1.0 / b)),
                                   -std::log(2.0 * b));
  return mean(l1 - loglik * cfg.lambda);
}

Eigen::Matrix<double, 1, 6> axis_descriptor(const Vec3& a) {
  Eigen::Matrix<double, 1, 6> d;
  d << a.x() * a.x(), a.y() * a.y(), a.z() * a.z(), a.x() * a.y(), a.x() * a.z(), a.y() * a.z();
  return d;
}

SizeHead::SizeHead(const SizeHeadConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  input = Standardizer::identity(cfg.input_dim);
  encoder_ = Mlp(stack(cfg.input_dim, cfg.encoder), cfg.activation, rng);
  const int enc_out = encoder_.output_dim();
  local_ = Mlp(stack(enc_out + 6, cfg.axis_local), cfg.activation, rng);
  const int loc_out = local_.output_dim();
  out_ = Mlp(chain(2 * loc_out, cfg.axis_out, 1), cfg.activation, rng, cfg.zero_last);
}

Tensor SizeHead::forward(const Tensor& members, std::span<const Eigen::Index> offsets, const Tensor& axes) const {
  const Eigen::Index groups = static_cast<Eigen::Index>(offsets.size()) - 1;
  if (axes.rows() != 3 * groups || axes.cols() != 6) throw std::invalid_argument("size head: bad axis block");
  const Tensor x = Tensor::constant(input.apply(members.value()));
  const Tensor enc = activate(encoder_.forward(x), cfg_.activation);
  const Tensor pooled = segment_max(enc, offsets);                        // G×H
  const Tensor per_axis = concat_cols({repeat_rows(pooled, 3), axes});    // 3G×(H+6)
  const Tensor local = activate(local_.forward(per_axis), cfg_.activation);
  const Tensor global = repeat_rows(segment_max(local, 3), 3);
  return softplus(out_.forward(concat_cols({local, global})));
}

std::vector<Tensor> SizeHead::parameters() const {
  std::vector<Tensor> p = encoder_.parameters();
  for (const auto* m : {&local_, &out_}) {
    const auto mp = m->parameters();
    p.insert(p.end(), mp.begin(), mp.end());
  }
  return p;
}

Vec3 forward_size(const SizeHead& head, const Matrix& group_features, const std::array<Vec3, 3>& axes) {
  if (group_features.rows() < 1) throw std::invalid_argument("forward_size: empty group");
  Matrix a(3, 6);
  for (int i = 0; i < 3; ++i) a.row(i) = axis_descriptor(axes[i]);
  const std::array<Eigen::Index, 2> offsets{0, group_features.rows()};
  const Tensor out = head.forward(Tensor::constant(group_features), offsets, Tensor::constant(a));
  return out.value().col(0);
}

ContactHead::ContactHead(const ContactHeadConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  input = Standardizer::identity(cfg.input_dim);
  encoder_ = Mlp(stack(cfg.input_dim, cfg.encoder), cfg.activation, rng);
  const int enc_out = encoder_.output_dim();
  local_ = Mlp(stack(enc_out + 3, cfg.vertex_local), cfg.activation, rng);
  const int loc_out = local_.output_dim();
  out_ = Mlp(chain(2 * loc_out, cfg.vertex_out, 1), cfg.activation, rng, cfg.zero_last);
}

ContactHead::Output ContactHead::forward(const Tensor& pair_features, const Tensor& vertices) const {
  if (vertices.rows() != 8 * pair_features.rows() || vertices.cols() != 3) {
    throw std::invalid_argument("contact head: expected 8 vertices per pair");
  }
  const Tensor x = Tensor::constant(input.apply(pair_features.value()));
  const Tensor enc = activate(encoder_.forward(x), cfg_.activation);
  const Tensor v_in = vertices * (1.0 / vertex_scale);
  const Tensor local = activate(local_.forward(concat_cols({repeat_rows(enc, 8), v_in})), cfg_.activation);
  const Tensor global = repeat_rows(segment_max(local, 8), 8);
  Output out;
  out.weights = segment_softmax(out_.forward(concat_cols({local, global})), 8);
  out.contacts = segment_sum(mul_rows(vertices, out.weights), 8);
  return out;
}

std::vector<Tensor> ContactHead::parameters() const {
  std::vector<Tensor> p = encoder_.parameters();
  for (const auto* m : {&local_, &out_}) {
    const auto mp = m->parameters();
    p.insert(p.end(), mp.begin(), mp.end());
  }
  return p;
}

ContactResult forward_contact(const ContactHead& head, const Eigen::VectorXd& pair_feature,
                              const std::array<Vec3, 8>& vertices) {
  Matrix v(8, 3);
  for (int j = 0; j < 8; ++j) v.row(j) = vertices[j].transpose();
  const auto out = head.forward(Tensor::constant(Matrix(pair_feature.transpose())), Tensor::constant(v));
  ContactResult r;
  for (int j = 0; j < 8; ++j) r.weights[j] = out.weights.value()(j, 0);
  r.contact = out.contacts.value().row(0).transpose();
  return r;
}

MlpHead::MlpHead(const MlpHeadConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  input = Standardizer::identity(cfg.input_dim);
  mlp_ = Mlp(chain(cfg.input_dim, cfg.hidden, cfg.output_dim), cfg.activation, rng, cfg.zero_last);
}

Tensor MlpHead::forward(const Tensor& features) const {
  return mlp_.forward(Tensor::constant(input.apply(features.value())));
}

Matrix MlpHead::predict(const Matrix& features) const { return forward(Tensor::constant(features)).value(); }

std::vector<Tensor> MlpHead::parameters() const { return mlp_.parameters(); }

Tensor bce_with_logits(const Tensor& logits, const Matrix& targets) {
  // −[y log σ(x) + (1−y) log(1−σ(x))] = softplus(x) − y·x
  return mean(softplus(logits) - logits * Tensor::constant(targets));
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    state_.m.push_back(Matrix::Zero(p.rows(), p.cols()));
    state_.v.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

double Adam::learning_rate(int epoch) const {
  const int steps = cfg_.decay_every > 0 ? epoch / cfg_.decay_every : 0;
  return cfg_.lr * std::pow(cfg_.decay, steps);
}

void Adam::step(int epoch) {
  ++state_.step;
  const double lr = learning_rate(epoch);
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix g = params_[i].grad();
    state_.m[i] = cfg_.beta1 * state_.m[i] + (1.0 - cfg_.beta1) * g;
    state_.v[i] = cfg_.beta2 * state_.v[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    if (lr == 0.0) continue;
    const Matrix mhat = state_.m[i] / c1;
    const Matrix vhat = state_.v[i] / c2;
    params_[i].mutable_value() -= lr * mhat.cwiseQuotient((vhat.array().sqrt() + cfg_.eps).matrix());
  }
}

void Adam::zero_grad() {
  for (const auto& p : params_) p.zero_grad();
}

TrainResult train(Adam& optimizer, std::size_t dataset_size, const BatchLoss& loss, const TrainConfig& cfg,
                  int start_epoch, const std::function<void(int, double)>& on_epoch) {
  if (dataset_size == 0) throw std::invalid_argument("train: empty dataset");
  if (cfg.batch == 0) throw std::invalid_argument("train: batch size must be positive");
  TrainResult result;
  std::vector<std::size_t> order(dataset_size);
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t start = 0; start < dataset_size; start += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, dataset_size - start);
      const std::span<const std::size_t> idx(order.data() + start, n);
      optimizer.zero_grad();
      const Tensor l = loss(idx);
      const double value = l.item();
      if (!std::isfinite(value)) {
        throw TrainingDiverged(epoch, "training diverged at epoch " + std::to_string(epoch));
      }
      l.backward();
      optimizer.step(epoch);
      total += value * static_cast<double>(n);
    }
    const double epoch_loss = total / static_cast<double>(dataset_size);
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& params, double h,
                           double tol, double floor, const std::function<std::vector<Matrix>()>& analytic_override) {
  for (const auto& p : params) p.zero_grad();
  std::vector<Matrix> analytic;
  if (analytic_override) {
    analytic = analytic_override();
  } else {
    loss_fn().backward();
    for (const auto& p : params) analytic.push_back(p.grad());
  }
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    Matrix numerics(p.rows(), p.cols());
    for (Eigen::Index e = 0; e < p.value().size(); ++e) {
      double& slot = p.mutable_value().data()[e];
      const double saved = slot;
      slot = saved + h;
      const double up = loss_fn().item();
      slot = saved - h;
      const double down = loss_fn().item();
      slot = saved;
      const double numeric = (up - down) / (2.0 * h);
      numerics.data()[e] = numeric;
      const double a = analytic[pi].data()[e];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.entries;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
        report.worst_param = pi;
        report.worst_index = e;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
    const double scale = std::max({analytic[pi].norm(), numerics.norm(), floor});
    const double rel = (analytic[pi] - numerics).norm() / scale;
    report.max_tensor_rel_error =
        std::isfinite(rel) ? std::max(report.max_tensor_rel_error, rel) : std::numeric_limits<double>::infinity();
  }
  report.passed = report.max_rel_error <= tol;
  for (const auto& p : params) p.zero_grad();
  return report;
}

std::vector<Matrix> snapshot(const std::vector<Tensor>& params) {
  std::vector<Matrix> out;
  for (const auto& p : params) out.push_back(p.value());
  return out;
}

void restore(const std::vector<Tensor>& params, const std::vector<Matrix>& values) {
  if (params.size() != values.size()) throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != values[i].rows() || params[i].cols() != values[i].cols()) {
      throw std::invalid_argument("restore: parameter shape mismatch");
    }
    Tensor p = params[i];
    p.mutable_value() = values[i];
  }
}

}  // namespace structkit::nn
