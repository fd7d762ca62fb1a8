#include "ip/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ip {

Matrix::Matrix(int r, int c, double fill) {
  if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative shape");
  rows = r;
  cols = c;
  data.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill);
}

bool all_finite(const Vector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(const Matrix& m) {
  for (double x : m.data)
    if (!std::isfinite(x)) return false;
  return true;
}

static void check_matvec(const Matrix& m, const Vector& x, const char* who) {
  if (m.cols != static_cast<int>(x.size()))
    throw std::invalid_argument(std::string(who) + ": shape mismatch, matrix cols " +
                                std::to_string(m.cols) + " vs vector dim " +
                                std::to_string(x.size()));
}

Vector matvec(const Matrix& m, const Vector& x) {
  check_matvec(m, x, "matvec");
  Vector out(static_cast<std::size_t>(m.rows), 0.0);
  matvec_add(m, x, out);
  return out;
}

void matvec_add(const Matrix& m, const Vector& x, Vector& out) {
  check_matvec(m, x, "matvec_add");
  if (static_cast<int>(out.size()) != m.rows)
    throw std::invalid_argument("matvec_add: output dim mismatch");
  const double* row = m.data.data();
  for (int r = 0; r < m.rows; ++r, row += m.cols) {
    double acc = 0.0;
    for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
}

void matvec_transpose_add(const Matrix& m, const Vector& x, Vector& out) {
  if (m.rows != static_cast<int>(x.size()))
    throw std::invalid_argument("matvec_transpose_add: shape mismatch");
  if (static_cast<int>(out.size()) != m.cols)
    throw std::invalid_argument("matvec_transpose_add: output dim mismatch");
  const double* row = m.data.data();
  for (int r = 0; r < m.rows; ++r, row += m.cols) {
    const double xr = x[r];
    for (int c = 0; c < m.cols; ++c) out[c] += row[c] * xr;
  }
}

void outer_add(const Vector& a, const Vector& b, Matrix& out) {
  if (out.rows != static_cast<int>(a.size()) || out.cols != static_cast<int>(b.size()))
    throw std::invalid_argument("outer_add: shape mismatch");
  double* row = out.data.data();
  for (std::size_t r = 0; r < a.size(); ++r, row += out.cols) {
    const double ar = a[r];
    for (std::size_t c = 0; c < b.size(); ++c) row[c] += ar * b[c];
  }
}

void axpy(double alpha, const Vector& x, Vector& out) {
  if (x.size() != out.size()) throw std::invalid_argument("axpy: dim mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += alpha * x[i];
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dim mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sigmoid(double x) {
  // Evaluate on the stable branch only; exp never overflows this way.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

Vector softmax(const Vector& z) {
  if (z.empty()) throw std::invalid_argument("softmax: empty input");
  const double zmax = *std::max_element(z.begin(), z.end());
  Vector out(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - zmax);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

int Rng::next_int(int n) {
  if (n <= 0) throw std::invalid_argument("Rng::next_int: n must be positive");
  return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
}

Matrix xavier_uniform(int rows, int cols, Rng& rng) {
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("xavier_uniform: shape must be positive");
  const double limit = std::sqrt(3.0 / static_cast<double>(cols));
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-limit, limit);
  return m;
}

double grad_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                  const std::vector<double>& params,
                  const std::vector<double>& analytic_grad,
                  double epsilon) {
  if (epsilon < 1e-6 || epsilon > 1e-3)
    throw std::invalid_argument("grad_check: epsilon outside [1e-6, 1e-3]");
  if (params.size() != analytic_grad.size())
    throw std::invalid_argument("grad_check: gradient dim mismatch");
  if (params.empty()) return 0.0;

  std::vector<double> probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + epsilon;
    const double up = loss_fn(probe);
    probe[i] = params[i] - epsilon;
    const double down = loss_fn(probe);
    probe[i] = params[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("grad_check: non-finite loss at parameter " + std::to_string(i));
    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = analytic_grad[i];
    const double denom = std::max(1.0, std::fabs(analytic) + std::fabs(numeric));
    worst = std::max(worst, std::fabs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace ip
