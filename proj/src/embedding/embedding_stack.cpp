#include "fema/embedding/embedding_stack.hpp"

#include "fema/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace fema::embedding {

using numeric::Mlp;
using numeric::MlpSpec;

Vector normalize_returns(const Vector& returns, double eps) {
  if (returns.size() == 0) throw UsageError("normalize_returns: empty batch");
  // the rounded mean of equal values can miss them by an ulp
  if (returns.minCoeff() == returns.maxCoeff()) return Vector::Zero(returns.size());
  const double n = static_cast<double>(returns.size());
  const double mean = returns.sum() / n;
  const double var = (returns.array() - mean).square().sum() / n;
  // floor rather than offset, so non-degenerate batches get unit std exactly
  const double denom = std::max(std::sqrt(var), eps);
  return -(returns.array() - mean) / denom;
}

namespace {

std::array<MlpSpec, 4> stack_specs(const EmbeddingConfig& cfg) {
  const auto& d = cfg.dims;
  const int w = cfg.hidden_width;
  return {MlpSpec::two_hidden(d.state, d.z_state, w), MlpSpec::two_hidden(d.action, d.z_action, w),
          MlpSpec::two_hidden(d.z_state + d.z_action, d.phi, w), MlpSpec::two_hidden(d.phi, 1, w)};
}

}  // namespace

void EmbeddingStack::validate_dims() const {
  const auto& d = cfg_.dims;
  if (d.state < 1 || d.action < 1 || d.z_state < 1 || d.z_action < 1 || d.phi < 1)
    throw ConfigError("EmbeddingStack: all dimensions must be >= 1");
  if (cfg_.hidden_width < 1) throw ConfigError("EmbeddingStack: hidden width must be >= 1");
  if (cfg_.epochs < 0 || cfg_.batch_size < 2)
    throw ConfigError("EmbeddingStack: epochs >= 0 and batch size >= 2 required");
}

EmbeddingStack::EmbeddingStack(const EmbeddingConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  validate_dims();
  const auto specs = stack_specs(cfg_);
  for (std::size_t i = 0; i < 4; ++i) {
    nets_[i] = Mlp::init(specs[i], numeric::Rng::derive(seed, 100 + i).next_u64());
    adam_[i] = numeric::AdamState::for_mlp(nets_[i], cfg_.adam);
  }
}

EmbeddingStack EmbeddingStack::zeros(const EmbeddingConfig& cfg) {
  EmbeddingStack s;
  s.cfg_ = cfg;
  s.validate_dims();
  const auto specs = stack_specs(cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    s.nets_[i] = Mlp::zeros(specs[i]);
    s.adam_[i] = numeric::AdamState::for_mlp(s.nets_[i], cfg.adam);
  }
  return s;
}

Vector EmbeddingStack::encode_state(const Vector& s) const {
  numeric::require_width(s, cfg_.dims.state, "encode_state");
  return f().apply(s);
}

Vector EmbeddingStack::encode_action(const Vector& a) const {
  numeric::require_width(a, cfg_.dims.action, "encode_action");
  return g().apply(a);
}

Vector EmbeddingStack::joint_embed(const Vector& z_s, const Vector& z_a) const {
  numeric::require_width(z_s, cfg_.dims.z_state, "joint_embed z_s");
  numeric::require_width(z_a, cfg_.dims.z_action, "joint_embed z_a");
  Vector x(z_s.size() + z_a.size());
  x << z_s, z_a;
  return j().apply(x);
}

double EmbeddingStack::risk(const Vector& phi) const {
  numeric::require_width(phi, cfg_.dims.phi, "risk");
  return h().apply(phi)[0];
}

Matrix EmbeddingStack::encode_states(const Matrix& states) const {
  if (states.rows() != cfg_.dims.state) throw ShapeError("encode_states: state width mismatch");
  return f().forward(states);
}

Matrix EmbeddingStack::encode_actions(const Matrix& actions) const {
  if (actions.rows() != cfg_.dims.action) throw ShapeError("encode_actions: action width mismatch");
  return g().forward(actions);
}

Matrix EmbeddingStack::joint_embed(const Matrix& z_s, const Matrix& z_a) const {
  if (z_s.rows() != cfg_.dims.z_state || z_a.rows() != cfg_.dims.z_action || z_s.cols() != z_a.cols())
    throw ShapeError("joint_embed: embedding shape mismatch");
  Matrix x(z_s.rows() + z_a.rows(), z_s.cols());
  x << z_s, z_a;
  return j().forward(x);
}

Vector EmbeddingStack::risk(const Matrix& phi) const {
  if (phi.rows() != cfg_.dims.phi) throw ShapeError("risk: phi width mismatch");
  return h().forward(phi).row(0).transpose();
}

double EmbeddingStack::loss(const Matrix& states, const Matrix& actions, const Vector& targets,
                            StackGrads* grads) const {
  const auto& d = cfg_.dims;
  const Eigen::Index n = targets.size();
  if (n == 0) throw UsageError("EmbeddingStack::loss: empty batch");
  numeric::require_shape(states, d.state, n, "risk loss states");
  numeric::require_shape(actions, d.action, n, "risk loss actions");

  numeric::ForwardCache cf, cg, cj, ch;
  const Matrix zs = f().forward(states, cf);
  const Matrix za = g().forward(actions, cg);
  Matrix x(d.z_state + d.z_action, n);
  x << zs, za;
  const Matrix phi = j().forward(x, cj);
  const Matrix out = h().forward(phi, ch);

  const Eigen::RowVectorXd diff = out.row(0) - targets.transpose();
  const double loss = diff.squaredNorm() / static_cast<double>(n);
  if (grads == nullptr) return loss;

  const Matrix dout = (2.0 / static_cast<double>(n)) * diff;
  Matrix dphi, dx, unused;
  grads->h = h().backward(ch, dout, &dphi);
  grads->j = j().backward(cj, dphi, &dx);
  grads->f = f().backward(cf, dx.topRows(d.z_state));
  grads->g = g().backward(cg, dx.bottomRows(d.z_action));
  return loss;
}

void EmbeddingStack::apply_gradients(const StackGrads& grads) {
  numeric::adam_step(nets_[0], grads.f, adam_[0]);
  numeric::adam_step(nets_[1], grads.g, adam_[1]);
  numeric::adam_step(nets_[2], grads.j, adam_[2]);
  numeric::adam_step(nets_[3], grads.h, adam_[3]);
}

TrainReport EmbeddingStack::train_risk(const RiskBatch& data, numeric::Rng& rng,
                                       std::optional<int> epochs) {
  TrainReport report;
  report.samples = data.size();
  report.epochs = epochs.value_or(cfg_.epochs);
  if (report.epochs < 0) throw UsageError("train_risk: negative epoch count");
  if (data.size() == 0) {
    report.status = TrainStatus::empty;
    report.epochs = 0;
    return report;
  }
  numeric::require_shape(data.states, cfg_.dims.state, data.size(), "train_risk states");
  numeric::require_shape(data.actions, cfg_.dims.action, data.size(), "train_risk actions");
  if (data.size() == 1) report.status = TrainStatus::degenerate;
  ++version_;

  const Eigen::Index n = data.size();
  const Eigen::Index bs = cfg_.batch_size;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  Matrix s_batch, a_batch;
  Vector h_batch;
  StackGrads grads;

  for (int epoch = 0; epoch < report.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double weighted = 0.0;
    for (Eigen::Index start = 0; start < n;) {
      Eigen::Index stop = std::min(n, start + bs);
      if (n - stop == 1) stop = n;  // fold a lone trailing sample into this batch
      const Eigen::Index m = stop - start;
      s_batch.resize(data.states.rows(), m);
      a_batch.resize(data.actions.rows(), m);
      h_batch.resize(m);
      for (Eigen::Index k = 0; k < m; ++k) {
        const auto idx = order[static_cast<std::size_t>(start + k)];
        s_batch.col(k) = data.states.col(idx);
        a_batch.col(k) = data.actions.col(idx);
        h_batch[k] = data.returns[idx];
      }
      const Vector targets = normalize_returns(h_batch);
      const double batch_loss = loss(s_batch, a_batch, targets, &grads);
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("train_risk: non-finite loss at epoch " + std::to_string(epoch));
      }
      apply_gradients(grads);
      weighted += batch_loss * static_cast<double>(m);
      start = stop;
    }
    const double epoch_loss = weighted / static_cast<double>(n);
    if (epoch == 0) report.initial_loss = epoch_loss;
    report.final_loss = epoch_loss;
  }
  for (const auto& net : nets_) {
    for (const auto& l : net.layers()) numeric::require_finite(l.weight, "train_risk parameters");
  }
  return report;
}

numeric::Mlp& EmbeddingStack::mutable_net(std::size_t index) {
  if (index >= nets_.size()) throw UsageError("EmbeddingStack::mutable_net: index out of range");
  ++version_;
  return nets_[index];
}

void EmbeddingStack::set_learning_rate(double lr) {
  cfg_.adam.lr = lr;
  for (auto& a : adam_) a.hyper.lr = lr;
}

namespace {
constexpr std::array<char, 4> kStackMagic{'F', 'E', 'M', 'B'};
constexpr std::uint32_t kStackVersion = 1;
}  // namespace

void EmbeddingStack::write(numeric::BinaryWriter& w) const {
  const auto& d = cfg_.dims;
  w.magic(kStackMagic);
  w.u32(kStackVersion);
  for (int v : {d.state, d.action, d.z_state, d.z_action, d.phi}) w.u32(static_cast<std::uint32_t>(v));
  w.u64(version_);
  for (const auto& net : nets_) numeric::write_mlp(w, net);
}

EmbeddingStack EmbeddingStack::read(numeric::BinaryReader& r, const EmbeddingConfig& cfg) {
  r.expect_magic(kStackMagic, "embedding stack");
  if (r.u32() != kStackVersion) throw FormatError("embedding stack: unsupported version");
  EmbeddingDims d;
  d.state = static_cast<int>(r.u32());
  d.action = static_cast<int>(r.u32());
  d.z_state = static_cast<int>(r.u32());
  d.z_action = static_cast<int>(r.u32());
  d.phi = static_cast<int>(r.u32());
  if (!(d == cfg.dims)) throw FormatError("embedding stack: dimension mismatch with configuration");
  EmbeddingStack s;
  s.cfg_ = cfg;
  s.version_ = r.u64();
  const auto specs = stack_specs(cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    s.nets_[i] = numeric::read_mlp(r);
    const auto& l = s.nets_[i].layers();
    if (s.nets_[i].input_width() != specs[i].widths.front() ||
        s.nets_[i].output_width() != specs[i].widths.back() || l.size() + 1 != specs[i].widths.size())
      throw FormatError("embedding stack: network shape mismatch");
    s.adam_[i] = numeric::AdamState::for_mlp(s.nets_[i], cfg.adam);
  }
  return s;
}

}  // namespace fema::embedding
