#include "fema/numeric/adam.hpp"

#include "fema/error.hpp"

#include <cmath>

namespace fema::numeric {

namespace {

template <typename P, typename G, typename S>
void adam_kernel(P& param, const G& grad, S& m, S& v, double c1, double c2, const AdamHyper& h) {
  m = h.beta1 * m + (1.0 - h.beta1) * grad;
  v = h.beta2 * v + (1.0 - h.beta2) * grad.cwiseProduct(grad);
  param.array() -= h.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + h.eps);
}

}  // namespace

AdamState AdamState::for_mlp(const Mlp& net, const AdamHyper& hyper) {
  AdamState s;
  s.hyper = hyper;
  s.m = net.zero_grads();
  s.v = net.zero_grads();
  return s;
}

void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state) {
  const auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || state.m.weight.size() != layers.size()) {
    throw ShapeError("adam_step: layer count mismatch");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    require_shape(grads.weight[i], layers[i].out(), layers[i].in(), "adam_step grad");
    require_width(grads.bias[i], layers[i].out(), "adam_step grad bias");
    require_shape(state.m.weight[i], layers[i].out(), layers[i].in(), "adam_step state");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.hyper.beta2, static_cast<double>(state.step));
  auto& mut = net.mutable_layers();
  for (std::size_t i = 0; i < mut.size(); ++i) {
    adam_kernel(mut[i].weight, grads.weight[i], state.m.weight[i], state.v.weight[i], c1, c2,
                state.hyper);
    adam_kernel(mut[i].bias, grads.bias[i], state.m.bias[i], state.v.bias[i], c1, c2, state.hyper);
  }
}

VectorAdam::VectorAdam(Eigen::Index n, const AdamHyper& h)
    : hyper(h), m(Vector::Zero(n)), v(Vector::Zero(n)) {}

void VectorAdam::apply(Vector& param, const Vector& grad) {
  require_width(grad, param.size(), "VectorAdam grad");
  require_width(m, param.size(), "VectorAdam state");
  ++step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  adam_kernel(param, grad, m, v, c1, c2, hyper);
}

}  // namespace fema::numeric
