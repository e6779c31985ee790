#include "doctest.h"
#include "helpers.hpp"

#include "fema/error.hpp"
#include "fema/numeric/adam.hpp"
#include "fema/numeric/binary_io.hpp"
#include "fema/numeric/mlp.hpp"
#include "fema/numeric/rng.hpp"

#include <sstream>

using namespace fema;
using namespace fema::numeric;

namespace {

MlpSpec spec_of(std::vector<int> widths, Activation hidden = Activation::tanh, Activation out = Activation::identity) {
  MlpSpec s;
  s.widths = std::move(widths);
  s.hidden = hidden;
  s.output = out;
  return s;
}

}  // namespace

TEST_SUITE("numeric") {
  TEST_CASE("init is bit-identical for the same spec and seed") {
    const auto a = Mlp::init(spec_of({2, 3, 1}), 7);
    const auto b = Mlp::init(spec_of({2, 3, 1}), 7);
    CHECK(a == b);
    CHECK(a.flat_parameters() == b.flat_parameters());
    CHECK_FALSE(a == Mlp::init(spec_of({2, 3, 1}), 8));
  }

  TEST_CASE("init draws from the fan-in range") {
    const auto net = Mlp::init(spec_of({9, 4, 1}), 1);
    const double bound0 = 1.0 / 3.0;
    CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= bound0);
    CHECK(net.layers()[1].weight.cwiseAbs().maxCoeff() <= 0.5);
  }

  TEST_CASE("empty or zero-width spec is a configuration error") {
    CHECK_THROWS_AS(Mlp::init(spec_of({}), 0), ConfigError);
    CHECK_THROWS_AS(Mlp::init(spec_of({3}), 0), ConfigError);
    CHECK_THROWS_AS(Mlp::init(spec_of({3, 0, 1}), 0), ConfigError);
  }

  TEST_CASE("zero network with identity activations outputs zero") {
    const auto net = Mlp::zeros(spec_of({3, 5, 2}, Activation::identity));
    Rng rng(4);
    const Vector y = net.apply(test::random_vector(rng, 3, 10.0));
    CHECK(y.size() == 2);
    CHECK(y.isZero(0.0));
  }

  TEST_CASE("forward of a [4,8,2] net matches the loop oracle") {
    const auto net = Mlp::init(spec_of({4, 8, 2}), 3);
    const std::vector<double> x{0.5, -1.25, 2.0, 0.1};
    const auto expect = test::oracle_forward(net, x);
    const Vector got = net.apply(test::to_eigen(x));
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(got[static_cast<Eigen::Index>(i)] == doctest::Approx(expect[i]).epsilon(1e-12));
  }

  TEST_CASE("identity layer passes input through") {
    Layer l{Matrix::Identity(3, 3), Vector::Zero(3), Activation::identity};
    const Mlp net({l});
    const Vector x = (Vector(3) << 1.5, -2.0, 0.25).finished();
    CHECK(net.apply(x) == x);
  }

  TEST_CASE("tanh layer at zero input and zero bias gives zero") {
    Rng rng(2);
    Layer l{test::random_matrix(rng, 4, 3), Vector::Zero(4), Activation::tanh};
    const Mlp net({l});
    CHECK(net.apply(Vector::Zero(3)).isZero(0.0));
  }

  TEST_CASE("random 3-layer net on 20 inputs matches the oracle to 1e-12") {
    const auto net = Mlp::init(spec_of({5, 7, 6, 3}), 11);
    Rng rng(12);
    const Matrix X = test::random_matrix(rng, 5, 20);
    const Matrix Y = net.forward(X);
    for (Eigen::Index c = 0; c < 20; ++c) {
      const auto expect = test::oracle_forward(net, test::to_std(X.col(c)));
      for (Eigen::Index r = 0; r < 3; ++r) CHECK(std::abs(Y(r, c) - expect[static_cast<std::size_t>(r)]) < 1e-12);
    }
  }

  TEST_CASE("width mismatch is a shape error") {
    const auto net = Mlp::init(spec_of({4, 8, 2}), 3);
    CHECK_THROWS_AS(net.apply(Vector::Zero(3)), ShapeError);
    CHECK_THROWS_AS(net.forward(Matrix::Zero(5, 2)), ShapeError);
  }

  TEST_CASE("zero output gradient gives zero parameter gradients") {
    const auto net = Mlp::init(spec_of({3, 6, 2}), 5);
    Rng rng(1);
    ForwardCache cache;
    net.forward(test::random_matrix(rng, 3, 4), cache);
    Matrix gin;
    const auto g = net.backward(cache, Matrix::Zero(2, 4), &gin);
    CHECK(g.max_abs() == 0.0);
    CHECK(gin.rows() == 3);
    CHECK(gin.cols() == 4);
    CHECK(gin.isZero(0.0));
  }

  TEST_CASE("backward agrees with central differences") {
    for (auto act : {Activation::tanh, Activation::identity}) {
      const auto net = Mlp::init(spec_of({3, 5, 4, 1}, act), 21);
      Rng rng(22);
      const Matrix X = test::random_matrix(rng, 3, 6);
      ForwardCache cache;
      net.forward(X, cache);
      Matrix gin;
      const auto g = net.backward(cache, Matrix::Ones(1, 6), &gin);
      auto loss = [&](const Vector& theta) {
        Mlp copy = net;
        copy.set_flat_parameters(theta);
        return copy.forward(X).sum();
      };
      CHECK(test::max_rel_error(g.flatten(), test::fd_gradient(loss, net.flat_parameters())) < 1e-4);
      // input gradient, sample 0
      auto in_loss = [&](const Vector& x) { return net.apply(x)[0]; };
      const Vector fd_in = test::fd_gradient(in_loss, X.col(0));
      CHECK(test::max_rel_error(gin.col(0), fd_in) < 1e-4);
    }
  }

  TEST_CASE("linear net: gradient of w'x with respect to w is x") {
    Layer l{Matrix::Zero(1, 4), Vector::Zero(1), Activation::identity};
    const Mlp net({l});
    const Vector x = (Vector(4) << 1.0, -2.0, 3.5, 0.25).finished();
    ForwardCache cache;
    net.forward(x, cache);
    const auto g = net.backward(cache, Matrix::Ones(1, 1));
    CHECK(Vector(g.weight[0].row(0).transpose()) == x);
    CHECK(g.bias[0][0] == 1.0);
  }

  TEST_CASE("stale or foreign cache is a usage error") {
    auto net = Mlp::init(spec_of({2, 3, 1}), 1);
    ForwardCache cache;
    net.forward(Matrix::Ones(2, 1), cache);
    const auto other = Mlp::init(spec_of({2, 3, 1}), 2);
    CHECK_THROWS_AS(other.backward(cache, Matrix::Ones(1, 1)), UsageError);
    net.mutable_layers()[0].bias[0] += 1.0;
    CHECK_THROWS_AS(net.backward(cache, Matrix::Ones(1, 1)), UsageError);
    CHECK_THROWS_AS(net.backward(ForwardCache{}, Matrix::Ones(1, 1)), UsageError);
  }

  TEST_CASE("adam with zero gradients leaves parameters unchanged") {
    auto net = Mlp::init(spec_of({3, 4, 2}), 9);
    const auto before = net.flat_parameters();
    auto st = AdamState::for_mlp(net, {0.1});
    for (int i = 0; i < 5; ++i) adam_step(net, net.zero_grads(), st);
    CHECK(net.flat_parameters() == before);
    CHECK(st.step == 5);
  }

  TEST_CASE("adam first step on a scalar with g=1, lr=0.1 moves by -0.1") {
    // m1 = 0.1, v1 = 0.001; bias-corrected both give 1 and 1, so the step is
    // lr * 1 / (1 + eps).
    Layer l{Matrix::Zero(1, 1), Vector::Zero(1), Activation::identity};
    Mlp net({l});
    auto st = AdamState::for_mlp(net, {0.1});
    auto g = net.zero_grads();
    g.weight[0](0, 0) = 1.0;
    adam_step(net, g, st);
    CHECK(net.layers()[0].weight(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    VectorAdam va(1, {0.1});
    Vector p = Vector::Zero(1);
    va.apply(p, Vector::Ones(1));
    CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-7));
  }

  TEST_CASE("adam minimizes (w - 3)^2 within 2000 steps") {
    Layer l{Matrix::Zero(1, 1), Vector::Zero(1), Activation::identity};
    Mlp net({l});
    auto st = AdamState::for_mlp(net, {0.05});
    for (int i = 0; i < 2000; ++i) {
      auto g = net.zero_grads();
      g.weight[0](0, 0) = 2.0 * (net.layers()[0].weight(0, 0) - 3.0);
      adam_step(net, g, st);
    }
    CHECK(std::abs(net.layers()[0].weight(0, 0) - 3.0) < 1e-3);
  }

  TEST_CASE("adam rejects mismatched gradient shapes") {
    auto net = Mlp::init(spec_of({3, 4, 2}), 9);
    auto st = AdamState::for_mlp(net);
    const auto wrong = Mlp::init(spec_of({3, 5, 2}), 9).zero_grads();
    CHECK_THROWS_AS(adam_step(net, wrong, st), ShapeError);
    VectorAdam va(2, {});
    Vector p = Vector::Zero(2);
    CHECK_THROWS_AS(va.apply(p, Vector::Zero(3)), ShapeError);
  }

  TEST_CASE("binary network format round-trips and rejects corruption") {
    const auto net = Mlp::init(spec_of({3, 4, 2}, Activation::relu, Activation::tanh), 17);
    std::stringstream buf;
    BinaryWriter w(buf);
    write_mlp(w, net);
    const std::string bytes = buf.str();
    std::stringstream in(bytes);
    BinaryReader r(in);
    CHECK(read_mlp(r) == net);

    std::string bad = bytes;
    bad[0] = 'X';
    std::stringstream in_bad(bad);
    BinaryReader rb(in_bad);
    CHECK_THROWS_AS(read_mlp(rb), FormatError);

    std::stringstream in_short(bytes.substr(0, bytes.size() - 3));
    BinaryReader rs(in_short);
    CHECK_THROWS_AS(read_mlp(rs), FormatError);
  }

  TEST_CASE("derived rng streams are reproducible and distinct") {
    Rng a = Rng::derive(5, 1), b = Rng::derive(5, 1), c = Rng::derive(5, 2);
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() != c.next_u64());
    const std::string saved = a.state();
    const double x = a.normal();
    a.restore(saved);
    CHECK(a.normal() == x);
  }

  TEST_CASE("soft update interpolates parameters") {
    auto a = Mlp::init(spec_of({2, 3, 1}), 1);
    const auto b = Mlp::init(spec_of({2, 3, 1}), 2);
    const Vector expect = 0.75 * a.flat_parameters() + 0.25 * b.flat_parameters();
    a.soft_update(b, 0.25);
    CHECK((a.flat_parameters() - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
}
