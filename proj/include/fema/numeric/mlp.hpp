#pragma once

#include "fema/numeric/tensor.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace fema::numeric {

enum class Activation : std::uint8_t { identity = 0, tanh = 1, relu = 2 };

std::string_view to_string(Activation a);

/// Layer widths plus activation tags. `widths = {in, h1, ..., out}`.
struct MlpSpec {
  std::vector<int> widths;
  Activation hidden = Activation::tanh;
  Activation output = Activation::identity;

  /// The default shape of every learned component: two tanh hidden layers.
  static MlpSpec two_hidden(int in, int out, int hidden_width = 64);
};

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation act = Activation::identity;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

/// Gradients (or any per-parameter quantity) with the exact shapes of an Mlp.
struct MlpGrads {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  void set_zero();
  MlpGrads& operator+=(const MlpGrads& other);
  MlpGrads& operator*=(double s);
  std::size_t size() const;
  Vector flatten() const;
  double max_abs() const;
};

/// Activations recorded by a forward pass; consumed by `Mlp::backward`.
struct ForwardCache {
  std::uint64_t stamp = 0;
  std::vector<Matrix> inputs;   // inputs[i]: input to layer i, in_i x batch
  std::vector<Matrix> outputs;  // outputs[i]: post-activation of layer i
};

/// Dense multi-layer perceptron over column-batched inputs.
///
/// Each mutation re-stamps the instance; a cache produced before the
/// mutation (or by another network) is rejected by `backward`.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  /// Uniform fan-in initialization: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
  /// drawn row-major per layer from a generator seeded with `seed`.
  static Mlp init(const MlpSpec& spec, std::uint64_t seed);

  /// Same layout as `spec`, all parameters zero.
  static Mlp zeros(const MlpSpec& spec);

  Eigen::Index input_width() const;
  Eigen::Index output_width() const;
  std::size_t depth() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }

  Vector apply(const Vector& x) const;
  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, ForwardCache& cache) const;

  /// Backpropagates `output_grad` (out x batch, dLoss/dOutput). Gradients are
  /// summed over the batch. `input_grad`, when given, receives dLoss/dInput.
  MlpGrads backward(const ForwardCache& cache, const Matrix& output_grad,
                    Matrix* input_grad = nullptr) const;

  MlpGrads zero_grads() const;

  std::size_t parameter_count() const;
  Vector flat_parameters() const;
  void set_flat_parameters(const Vector& flat);

  /// Mutable parameter access; re-stamps the network.
  std::vector<Layer>& mutable_layers();

  /// this <- (1 - tau) * this + tau * src
  void soft_update(const Mlp& src, double tau);

  void set_zero();

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  void validate() const;
  void restamp();

  std::vector<Layer> layers_;
  std::uint64_t stamp_ = 0;
};

}  // namespace fema::numeric
