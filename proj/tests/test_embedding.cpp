#include "doctest.h"
#include "helpers.hpp"

#include "fema/embedding/embedding_stack.hpp"
#include "fema/error.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

using namespace fema;
using namespace fema::embedding;
using numeric::Rng;

namespace {

EmbeddingConfig small_config(int ds = 3, int da = 2) {
  EmbeddingConfig c;
  c.dims = {ds, da, 4, 3, 5};
  c.hidden_width = 6;
  return c;
}

// Largest singular value of each weight times the tanh slope bound of 1.
double lipschitz_bound(const numeric::Mlp& net) {
  double L = 1.0;
  for (const auto& l : net.layers()) {
    Eigen::JacobiSVD<Matrix> svd(l.weight);
    L *= svd.singularValues()[0];
  }
  return L;
}

}  // namespace

// Trains on 1000 pairs where H = -|s|, returns the rank correlation between
// rho and -H on 200 held-out pairs.
static double risk_ordering_correlation(std::uint64_t seed) {
  EmbeddingConfig cfg;
  cfg.dims = {2, 1, 16, 8, 32};
  cfg.epochs = 100;
  EmbeddingStack stack(cfg, seed);
  Rng rng = Rng::derive(seed, 99);
  auto make = [&](int n) {
    RiskBatch b{Matrix(2, n), Matrix(1, n), Vector(n)};
    for (int i = 0; i < n; ++i) {
      b.states.col(i) = test::random_vector(rng, 2);
      b.actions(0, i) = rng.uniform(-1.0, 1.0);
      b.returns[i] = -b.states.col(i).norm();
    }
    return b;
  };
  const RiskBatch train = make(1000), held = make(200);
  stack.train_risk(train, rng);
  const Vector rho = stack.risk(stack.joint_embed(stack.encode_states(held.states), stack.encode_actions(held.actions)));
  return test::spearman(rho, -held.returns);
}

TEST_SUITE("embedding") {
  TEST_CASE("zero stack maps everything to zero") {
    const auto stack = EmbeddingStack::zeros(small_config());
    Rng rng(1);
    const Vector s = test::random_vector(rng, 3, 5.0), a = test::random_vector(rng, 2);
    const Vector zs = stack.encode_state(s), za = stack.encode_action(a);
    CHECK(zs.size() == 4);
    CHECK(za.size() == 3);
    CHECK(zs.isZero(0.0));
    CHECK(za.isZero(0.0));
    CHECK(stack.joint_embed(zs, za).isZero(0.0));
    CHECK(stack.risk(Vector(Vector::Ones(5))) == 0.0);
  }

  TEST_CASE("encoders are deterministic and match the loop oracle") {
    const EmbeddingStack stack(small_config(), 42);
    Rng rng(2);
    for (int k = 0; k < 10; ++k) {
      const Vector s = test::random_vector(rng, 3), a = test::random_vector(rng, 2);
      CHECK(stack.encode_state(s) == stack.encode_state(s));
      const Vector zs = stack.encode_state(s), za = stack.encode_action(a);
      CHECK((zs - test::to_eigen(test::oracle_forward(stack.f(), test::to_std(s)))).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((za - test::to_eigen(test::oracle_forward(stack.g(), test::to_std(a)))).cwiseAbs().maxCoeff() < 1e-12);
      Vector cat(7);
      cat << zs, za;
      const Vector phi = stack.joint_embed(zs, za);
      CHECK((phi - test::to_eigen(test::oracle_forward(stack.j(), test::to_std(cat)))).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(stack.risk(phi) - test::oracle_forward(stack.h(), test::to_std(phi))[0]) < 1e-12);
    }
  }

  TEST_CASE("joint embedding equals the stepwise composition") {
    const EmbeddingStack stack(small_config(), 5);
    Rng rng(3);
    const Matrix S = test::random_matrix(rng, 3, 8), A = test::random_matrix(rng, 2, 8);
    const Matrix zs = stack.f().forward(S), za = stack.g().forward(A);
    Matrix cat(7, 8);
    cat << zs, za;
    CHECK(stack.joint_embed(stack.encode_states(S), stack.encode_actions(A)) == stack.j().forward(cat));
    for (Eigen::Index c = 0; c < 8; ++c) {
      const Vector single = stack.joint_embed(stack.encode_state(S.col(c)), stack.encode_action(A.col(c)));
      Vector cat1(7);
      cat1 << stack.f().apply(S.col(c)), stack.g().apply(A.col(c));
      CHECK(single == stack.j().apply(cat1));
      // batched and single-sample products may round differently
      CHECK((single - stack.joint_embed(zs, za).col(c)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("state encoder respects its weight-norm Lipschitz bound") {
    const EmbeddingStack stack(small_config(), 9);
    const double L = lipschitz_bound(stack.f());
    Rng rng(4);
    for (int k = 0; k < 50; ++k) {
      const Vector s = test::random_vector(rng, 3);
      Vector d = test::random_vector(rng, 3);
      d *= 1e-6 / d.norm();
      CHECK((stack.encode_state(s + d) - stack.encode_state(s)).norm() <= L * 1e-6 * (1.0 + 1e-9));
    }
  }

  TEST_CASE("width mismatches are shape errors") {
    const EmbeddingStack stack(small_config(), 1);
    CHECK_THROWS_AS(stack.encode_state(Vector::Zero(2)), ShapeError);
    CHECK_THROWS_AS(stack.encode_action(Vector::Zero(3)), ShapeError);
    CHECK_THROWS_AS(stack.joint_embed(Vector(Vector::Zero(4)), Vector(Vector::Zero(2))), ShapeError);
    CHECK_THROWS_AS(stack.risk(Vector(Vector::Zero(4))), ShapeError);
  }

  TEST_CASE("return normalization") {
    CHECK(normalize_returns((Vector(3) << 2, 2, 2).finished()).isZero(0.0));
    const Vector y = normalize_returns((Vector(2) << 0, 2).finished());
    CHECK(y[0] == 1.0);
    CHECK(y[1] == -1.0);
    // below the floor the divisor is eps itself
    const Vector tiny = normalize_returns((Vector(2) << 0, 1e-8).finished());
    CHECK(tiny[0] == doctest::Approx(5e-3).epsilon(1e-9));
    CHECK(normalize_returns((Vector(4) << 37.3, 37.3, 37.3, 37.3).finished()).isZero(0.0));
    CHECK_THROWS_AS(normalize_returns(Vector()), UsageError);
    Rng rng(6);
    for (int k = 0; k < 20; ++k) {
      // small spreads too: std must stay 1 down to sigma = 1e-3
      const double spread = k % 2 ? 3.0 : 2e-3;
      const Vector H = test::random_vector(rng, 17, spread).array() + 4.0;
      const Vector t = normalize_returns(H);
      CHECK(std::abs(t.mean()) < 1e-9);
      const double sd = std::sqrt((t.array() - t.mean()).square().mean());
      CHECK(std::abs(sd - 1.0) < 1e-5);
      CHECK((normalize_returns(-H) + t).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("end-to-end loss gradient matches finite differences for f, g, j, h") {
    const EmbeddingStack stack(small_config(), 13);
    Rng rng(7);
    const Matrix S = test::random_matrix(rng, 3, 5), A = test::random_matrix(rng, 2, 5);
    const Vector y = test::random_vector(rng, 5);
    StackGrads g;
    stack.loss(S, A, y, &g);
    const numeric::MlpGrads* parts[4] = {&g.f, &g.g, &g.j, &g.h};
    for (std::size_t k = 0; k < 4; ++k) {
      auto loss = [&](const Vector& theta) {
        EmbeddingStack copy = stack;
        copy.mutable_net(k).set_flat_parameters(theta);
        return copy.loss(S, A, y, nullptr);
      };
      const numeric::Mlp& net = k == 0 ? stack.f() : k == 1 ? stack.g() : k == 2 ? stack.j() : stack.h();
      CHECK(test::max_rel_error(parts[k]->flatten(), test::fd_gradient(loss, net.flat_parameters())) < 1e-4);
    }
  }

  TEST_CASE("zero learning rate freezes the stack and keeps the loss") {
    auto cfg = small_config();
    cfg.adam.lr = 0.0;
    cfg.epochs = 3;
    EmbeddingStack stack(cfg, 2);
    const EmbeddingStack before = stack;
    Rng rng(8);
    RiskBatch b{test::random_matrix(rng, 3, 40), test::random_matrix(rng, 2, 40), test::random_vector(rng, 40)};
    const auto rep = stack.train_risk(b, rng);
    CHECK(rep.status == TrainStatus::ok);
    CHECK(rep.final_loss == doctest::Approx(rep.initial_loss).epsilon(1e-12));
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& n0 = k == 0 ? before.f() : k == 1 ? before.g() : k == 2 ? before.j() : before.h();
      const auto& n1 = k == 0 ? stack.f() : k == 1 ? stack.g() : k == 2 ? stack.j() : stack.h();
      CHECK(n0.flat_parameters() == n1.flat_parameters());
    }
  }

  TEST_CASE("repeated sample with target zero and zero output has zero loss") {
    auto stack = EmbeddingStack::zeros(small_config());
    Matrix S = Matrix::Ones(3, 4), A = Matrix::Ones(2, 4);
    CHECK(stack.loss(S, A, Vector::Zero(4), nullptr) == 0.0);
    Rng rng(1);
    // identical returns normalize to zero targets
    const auto rep = stack.train_risk({S, A, Vector::Constant(4, 2.5)}, rng, 1);
    CHECK(rep.final_loss == 0.0);
  }

  TEST_CASE("empty data is a no-op with empty status") {
    EmbeddingStack stack(small_config(), 3);
    const auto v = stack.version();
    Rng rng(1);
    const auto rep = stack.train_risk({Matrix(3, 0), Matrix(2, 0), Vector(0)}, rng);
    CHECK(rep.status == TrainStatus::empty);
    CHECK(stack.version() == v);
  }

  TEST_CASE("linear risk data: loss after 500 epochs below 10% of initial") {
    EmbeddingConfig cfg;
    cfg.dims = {2, 1, 16, 8, 32};
    cfg.epochs = 500;
    EmbeddingStack stack(cfg, 21);
    Rng rng(22);
    RiskBatch b{test::random_matrix(rng, 2, 256), Matrix::Zero(1, 256), Vector(256)};
    for (Eigen::Index i = 0; i < 256; ++i) b.returns[i] = -b.states(0, i);
    const auto rep = stack.train_risk(b, rng);
    CHECK(rep.epochs == 500);
    CHECK(rep.final_loss < 0.1 * rep.initial_loss);
  }

  TEST_CASE("risk ordering on a monotone synthetic set") {
    CHECK(risk_ordering_correlation(0) >= 0.9);
  }

  TEST_CASE("stack binary round-trip preserves outputs") {
    const EmbeddingStack stack(small_config(), 31);
    std::stringstream buf;
    numeric::BinaryWriter w(buf);
    stack.write(w);
    numeric::BinaryReader r(buf);
    const auto back = EmbeddingStack::read(r, small_config());
    Rng rng(1);
    const Vector s = test::random_vector(rng, 3);
    CHECK(back.encode_state(s) == stack.encode_state(s));
    CHECK(back.version() == stack.version());
  }
}
