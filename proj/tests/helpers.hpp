#pragma once

#include "fema/numeric/mlp.hpp"
#include "fema/numeric/rng.hpp"

#include <algorithm>

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace test {

using fema::Matrix;
using fema::Vector;

// Forward pass written with plain loops over std::vector, sharing nothing
// with the library beyond reading the parameters.
inline std::vector<double> oracle_forward(const fema::numeric::Mlp& net, std::vector<double> x) {
  for (const auto& layer : net.layers()) {
    const auto rows = static_cast<std::size_t>(layer.weight.rows());
    const auto cols = static_cast<std::size_t>(layer.weight.cols());
    std::vector<double> y(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = layer.bias(static_cast<Eigen::Index>(r));
      for (std::size_t c = 0; c < cols; ++c)
        acc += layer.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * x[c];
      switch (layer.act) {
        case fema::numeric::Activation::tanh: acc = std::tanh(acc); break;
        case fema::numeric::Activation::relu: acc = acc > 0.0 ? acc : 0.0; break;
        case fema::numeric::Activation::identity: break;
      }
      y[r] = acc;
    }
    x = std::move(y);
  }
  return x;
}

inline Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector random_vector(fema::numeric::Rng& rng, Eigen::Index n, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline Matrix random_matrix(fema::numeric::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// Central differences of `loss` around `theta`.
inline Vector fd_gradient(const std::function<double(const Vector&)>& loss, const Vector& theta, double h = 1e-5) {
  Vector g(theta.size());
  Vector t = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    t[i] = theta[i] + h;
    const double up = loss(t);
    t[i] = theta[i] - h;
    const double down = loss(t);
    t[i] = theta[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Max over entries of |a - b| / max(1, |a|, |b|); the unit floor keeps
// near-zero entries from dominating.
inline double max_rel_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Spearman rank correlation without tie handling (inputs are continuous).
inline double spearman(const Vector& a, const Vector& b) {
  auto ranks = [](const Vector& v) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return v[x] < v[y]; });
    std::vector<double> r(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[static_cast<std::size_t>(idx[i])] = static_cast<double>(i);
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(ra.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace test
