#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace ip {

// Dense row-major matrix. Everything here is small (hidden sizes in the
// hundreds at most), so no BLAS: plain loops keep seeded runs bitwise
// reproducible.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0);

  double& operator()(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
};

using Vector = std::vector<double>;

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

Vector matvec(const Matrix& m, const Vector& x);
void matvec_add(const Matrix& m, const Vector& x, Vector& out);            // out += M x
void matvec_transpose_add(const Matrix& m, const Vector& x, Vector& out);  // out += M^T x
void outer_add(const Vector& a, const Vector& b, Matrix& out);             // out += a b^T
void axpy(double alpha, const Vector& x, Vector& out);                     // out += alpha * x
double dot(const Vector& a, const Vector& b);

double sigmoid(double x);
double relu(double x);

// Max-subtracted softmax; safe for large-magnitude inputs.
Vector softmax(const Vector& z);

// Deterministic draw source. Equal seeds give bitwise-equal sequences on
// every platform: mt19937_64 output is fully specified and the real-valued
// helpers are built from raw 64-bit draws, not std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53 bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  int next_int(int n);  // uniform-ish in [0, n)

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Uniform init with limit sqrt(3 / fan_in); fan_in = cols.
Matrix xavier_uniform(int rows, int cols, Rng& rng);

// Central-difference gradient check. Returns
//   max_i |analytic_i - numeric_i| / max(1, |analytic_i| + |numeric_i|).
// epsilon must lie in [1e-6, 1e-3]; non-finite loss values throw.
double grad_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                  const std::vector<double>& params,
                  const std::vector<double>& analytic_grad,
                  double epsilon);

}  // namespace ip
