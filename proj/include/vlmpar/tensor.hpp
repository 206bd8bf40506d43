#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vlmpar {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

/// Dense row-major array of doubles with an explicit shape.
///
/// A default-constructed Tensor is empty (rank 0, no elements) and only
/// serves as a placeholder; every other tensor has positive dimensions and
/// `size() == shape_product(shape())`.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  /// Builds a rows x cols matrix from nested initializer lists.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Matrix view helpers; require rank 2.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Row r of a rank-2 tensor (or of the last-axis view of any tensor).
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  /// Same data, different shape with equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(double value);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// ---- kernels ---------------------------------------------------------------

/// a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// a^T * b for a[k x m], b[k x n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a * b^T for a[m x k], b[n x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& dst, const Tensor& src);
void axpy_inplace(Tensor& dst, double alpha, const Tensor& src);
Tensor scaled(const Tensor& a, double factor);

/// Row-wise softmax with max subtraction. Rank-1 input is treated as one row.
Tensor softmax_rows(const Tensor& x);

/// Normalizes every last-axis vector to zero mean and unit variance
/// (population variance, eps added under the root). When `inv_std` is
/// non-null it receives 1/sqrt(var + eps) per vector.
Tensor normalize_rows(const Tensor& x, double eps, std::vector<double>* inv_std = nullptr);

/// gamma * normalize(x) + beta over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& x);
double gelu(double x);

/// Mean over rows of a rank-2 tensor; returns a rank-1 tensor of width cols.
Tensor mean_rows(const Tensor& x);

/// Columns [start, start + width) of a rank-2 tensor.
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t width);
/// Writes `block` into columns starting at `start`.
void set_cols(Tensor& dst, std::size_t start, const Tensor& block);
/// Rows [start, start + count) of a rank-2 tensor.
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);

bool all_finite(const Tensor& x);

/// Rounds every element to the nearest float32 value (the storage precision).
void round_to_float32(Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);

// ---- randomness ------------------------------------------------------------

/// SplitMix64 generator. Identical seeds give identical streams on every
/// platform; normals come from Box-Muller over 53-bit uniforms.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal.
  double normal();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with a string tag into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

/// i.i.d. N(0, scale^2) samples, byte-identical for identical arguments.
Tensor seeded_normal(const Shape& shape, std::uint64_t seed, double scale);

}  // namespace vlmpar
