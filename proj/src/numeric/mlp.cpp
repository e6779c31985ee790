#include "fema/numeric/mlp.hpp"

#include "fema/error.hpp"
#include "fema/numeric/rng.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace fema::numeric {

namespace {

std::atomic<std::uint64_t> g_next_stamp{1};

void activate(Matrix& z, Activation act) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::tanh:
      z = z.array().tanh();
      break;
    case Activation::relu:
      z = z.array().max(0.0);
      break;
  }
}

// dLoss/dz from dLoss/dy, using the post-activation y.
void activation_backward(Matrix& grad, const Matrix& y, Activation act) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::tanh:
      grad.array() *= 1.0 - y.array().square();
      break;
    case Activation::relu:
      grad.array() *= (y.array() > 0.0).cast<double>();
      break;
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
  }
  return "?";
}

MlpSpec MlpSpec::two_hidden(int in, int out, int hidden_width) {
  return MlpSpec{{in, hidden_width, hidden_width, out}, Activation::tanh, Activation::identity};
}

// ---------------------------------------------------------------------------

void MlpGrads::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  if (other.weight.size() != weight.size()) throw ShapeError("MlpGrads: layer count mismatch");
  for (std::size_t i = 0; i < weight.size(); ++i) {
    require_shape(other.weight[i], weight[i].rows(), weight[i].cols(), "MlpGrads weight");
    weight[i] += other.weight[i];
    bias[i] += other.bias[i];
  }
  return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
  return *this;
}

std::size_t MlpGrads::size() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) n += weight[i].size() + bias[i].size();
  return static_cast<std::size_t>(n);
}

// Layer by layer: weight row-major, then bias. Matches Mlp::flat_parameters.
Vector MlpGrads::flatten() const {
  Vector flat(static_cast<Eigen::Index>(size()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    for (Eigen::Index r = 0; r < weight[i].rows(); ++r)
      for (Eigen::Index c = 0; c < weight[i].cols(); ++c) flat[k++] = weight[i](r, c);
    for (Eigen::Index r = 0; r < bias[i].size(); ++r) flat[k++] = bias[i][r];
  }
  return flat;
}

double MlpGrads::max_abs() const {
  double m = 0.0;
  for (const auto& w : weight) m = std::max(m, w.size() ? w.cwiseAbs().maxCoeff() : 0.0);
  for (const auto& b : bias) m = std::max(m, b.size() ? b.cwiseAbs().maxCoeff() : 0.0);
  return m;
}

// ---------------------------------------------------------------------------

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  validate();
  restamp();
}

void Mlp::validate() const {
  if (layers_.empty()) throw ConfigError("Mlp: no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in() < 1 || l.out() < 1) throw ConfigError("Mlp: layer widths must be >= 1");
    if (l.bias.size() != l.out()) throw ShapeError("Mlp: bias width differs from layer output");
    if (i > 0 && layers_[i - 1].out() != l.in()) {
      throw ShapeError("Mlp: layer " + std::to_string(i) + " input width " +
                       std::to_string(l.in()) + " != previous output width " +
                       std::to_string(layers_[i - 1].out()));
    }
  }
}

void Mlp::restamp() { stamp_ = g_next_stamp.fetch_add(1, std::memory_order_relaxed); }

namespace {

std::vector<Layer> shaped_layers(const MlpSpec& spec) {
  if (spec.widths.size() < 2) throw ConfigError("MlpSpec: need at least input and output widths");
  for (int w : spec.widths) {
    if (w < 1) throw ConfigError("MlpSpec: widths must be >= 1");
  }
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < spec.widths.size(); ++i) {
    Layer l;
    l.weight = Matrix::Zero(spec.widths[i + 1], spec.widths[i]);
    l.bias = Vector::Zero(spec.widths[i + 1]);
    l.act = (i + 2 == spec.widths.size()) ? spec.output : spec.hidden;
    layers.push_back(std::move(l));
  }
  return layers;
}

}  // namespace

Mlp Mlp::init(const MlpSpec& spec, std::uint64_t seed) {
  auto layers = shaped_layers(spec);
  Rng rng(seed);
  for (auto& l : layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-bound, bound);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = rng.uniform(-bound, bound);
  }
  return Mlp(std::move(layers));
}

Mlp Mlp::zeros(const MlpSpec& spec) { return Mlp(shaped_layers(spec)); }

Eigen::Index Mlp::input_width() const { return layers_.empty() ? 0 : layers_.front().in(); }
Eigen::Index Mlp::output_width() const { return layers_.empty() ? 0 : layers_.back().out(); }

Vector Mlp::apply(const Vector& x) const {
  Matrix out = forward(Matrix(x));
  return out.col(0);
}

Matrix Mlp::forward(const Matrix& x) const {
  if (layers_.empty()) throw UsageError("Mlp::forward on an empty network");
  if (x.rows() != input_width()) {
    throw ShapeError("Mlp::forward: input width " + std::to_string(x.rows()) + " != " +
                     std::to_string(input_width()));
  }
  Matrix h = x;
  for (const auto& l : layers_) {
    Matrix z = l.weight * h;
    z.colwise() += l.bias;
    activate(z, l.act);
    h = std::move(z);
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x, ForwardCache& cache) const {
  if (layers_.empty()) throw UsageError("Mlp::forward on an empty network");
  if (x.rows() != input_width()) {
    throw ShapeError("Mlp::forward: input width " + std::to_string(x.rows()) + " != " +
                     std::to_string(input_width()));
  }
  cache.stamp = stamp_;
  cache.inputs.resize(layers_.size());
  cache.outputs.resize(layers_.size());
  cache.inputs[0] = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    Matrix z = l.weight * cache.inputs[i];
    z.colwise() += l.bias;
    activate(z, l.act);
    if (i + 1 < layers_.size()) cache.inputs[i + 1] = z;
    cache.outputs[i] = std::move(z);
  }
  return cache.outputs.back();
}

MlpGrads Mlp::backward(const ForwardCache& cache, const Matrix& output_grad,
                       Matrix* input_grad) const {
  if (cache.stamp != stamp_ || cache.inputs.size() != layers_.size() ||
      cache.outputs.size() != layers_.size()) {
    throw UsageError("Mlp::backward: cache does not belong to this network state");
  }
  const Eigen::Index batch = cache.inputs[0].cols();
  require_shape(output_grad, output_width(), batch, "Mlp::backward output_grad");

  MlpGrads grads;
  grads.weight.resize(layers_.size());
  grads.bias.resize(layers_.size());
  Matrix g = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    activation_backward(g, cache.outputs[k], l.act);
    grads.weight[k].noalias() = g * cache.inputs[k].transpose();
    grads.bias[k] = g.rowwise().sum();
    if (k > 0 || input_grad != nullptr) {
      Matrix next = l.weight.transpose() * g;
      g = std::move(next);
    }
  }
  if (input_grad != nullptr) *input_grad = std::move(g);
  return grads;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (const auto& l : layers_) {
    g.weight.push_back(Matrix::Zero(l.out(), l.in()));
    g.bias.push_back(Vector::Zero(l.out()));
  }
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vector Mlp::flat_parameters() const {
  MlpGrads view;
  for (const auto& l : layers_) {
    view.weight.push_back(l.weight);
    view.bias.push_back(l.bias);
  }
  return view.flatten();
}

void Mlp::set_flat_parameters(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw ShapeError("Mlp::set_flat_parameters: expected " + std::to_string(parameter_count()) +
                     " values, got " + std::to_string(flat.size()));
  }
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
  }
  restamp();
}

std::vector<Layer>& Mlp::mutable_layers() {
  restamp();
  return layers_;
}

void Mlp::soft_update(const Mlp& src, double tau) {
  if (src.layers_.size() != layers_.size()) throw ShapeError("Mlp::soft_update: depth mismatch");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    require_shape(src.layers_[i].weight, layers_[i].out(), layers_[i].in(), "Mlp::soft_update");
    // difference form is exact when source and target already agree
    layers_[i].weight += tau * (src.layers_[i].weight - layers_[i].weight);
    layers_[i].bias += tau * (src.layers_[i].bias - layers_[i].bias);
  }
  restamp();
}

void Mlp::set_zero() {
  for (auto& l : layers_) {
    l.weight.setZero();
    l.bias.setZero();
  }
  restamp();
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.act != y.act || x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols())
      return false;
    if (x.weight != y.weight || x.bias != y.bias) return false;
  }
  return true;
}

}  // namespace fema::numeric
