#pragma once

// Brute-force reference computations shared by unit and acceptance tests.
// Nothing here calls the closed forms under test.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

// Single-step kernel M[a][b] = q(next = b | prev = a).
inline Matrix step_kernel(std::size_t K, double beta) {
  Matrix m(K, std::vector<double>(K, 0.0));
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < K; ++b) m[a][b] = (a == b ? 1.0 - beta : 0.0) + beta / static_cast<double>(K);
  return m;
}

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.size(), k = b.size(), m = b[0].size();
  Matrix c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t j = 0; j < m; ++j) c[i][j] += a[i][l] * b[l][j];
  return c;
}

// q(x_t | x_1) as a matrix, by composing step kernels for l = 2..t.
// betas[l - 2] holds beta_l.
inline Matrix composed_kernel(std::size_t K, const std::vector<double>& betas, std::size_t t) {
  Matrix m(K, std::vector<double>(K, 0.0));
  for (std::size_t a = 0; a < K; ++a) m[a][a] = 1.0;
  for (std::size_t l = 2; l <= t; ++l) m = multiply(m, step_kernel(K, betas[l - 2]));
  return m;
}

// q(x_{t-1} = k | x_t, x_1) by enumerating x_{t-1} under Bayes' rule.
inline std::vector<double> posterior(std::size_t K, const std::vector<double>& betas, std::size_t t, int xt, int x1) {
  const Matrix prior = composed_kernel(K, betas, t - 1);
  const Matrix step = step_kernel(K, betas[t - 2]);
  std::vector<double> p(K);
  double z = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    p[k] = prior[x1][k] * step[k][xt];
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

inline double tv(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace oracle
