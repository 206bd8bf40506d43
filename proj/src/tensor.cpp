#include "vlmpar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "vlmpar/error.hpp"

namespace vlmpar {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero-sized axis in shape " + shape_string(shape));
  }
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(fmt::format("{} expects a matrix, got shape {}", what,
                                     shape_string(t.shape())));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shapes {} and {} differ", what,
                                     shape_string(a.shape()), shape_string(b.shape())));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_product(shape_)) {
    throw DimensionError(fmt::format("shape {} needs {} values, got {}", shape_string(shape_),
                                     shape_product(shape_), data_.size()));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError(fmt::format("axis {} out of range for shape {}", axis,
                                     shape_string(shape_)));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  require_matrix(*this, "rows()");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_matrix(*this, "cols()");
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t w = shape_.back();
  return std::span<double>(data_).subspan(r * w, w);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t w = shape_.back();
  return std::span<const double>(data_).subspan(r * w, w);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_product(shape) != size()) {
    throw DimensionError(fmt::format("cannot reshape {} to {}", shape_string(shape_),
                                     shape_string(shape)));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

// ---- kernels ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError(fmt::format("matmul inner dimensions disagree: {} * {}",
                                     shape_string(a.shape()), shape_string(b.shape())));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError(fmt::format("matmul_tn row counts disagree: {}^T * {}",
                                     shape_string(a.shape()), shape_string(b.shape())));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = pa + p * m;
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError(fmt::format("matmul_nt column counts disagree: {} * {}^T",
                                     shape_string(a.shape()), shape_string(b.shape())));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out.at(i, j) = s;
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require_same_shape(dst, src, "add");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void axpy_inplace(Tensor& dst, double alpha, const Tensor& src) {
  require_same_shape(dst, src, "axpy");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

Tensor scaled(const Tensor& a, double factor) {
  Tensor out = a;
  for (auto& v : out.data()) v *= factor;
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out = x;
  const std::size_t width = x.shape().back();
  const std::size_t n_rows = x.size() / width;
  for (std::size_t r = 0; r < n_rows; ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
  return out;
}

Tensor normalize_rows(const Tensor& x, double eps, std::vector<double>* inv_std) {
  Tensor out = x;
  const std::size_t width = x.shape().back();
  const std::size_t n_rows = x.size() / width;
  if (inv_std) inv_std->assign(n_rows, 0.0);
  for (std::size_t r = 0; r < n_rows; ++r) {
    auto row = out.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    for (auto& v : row) v = (v - mean) * is;
    if (inv_std) (*inv_std)[r] = is;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t width = x.shape().back();
  if (gamma.size() != width || beta.size() != width) {
    throw DimensionError(fmt::format("layer_norm over width {} with gamma {} beta {}", width,
                                     shape_string(gamma.shape()), shape_string(beta.shape())));
  }
  Tensor out = normalize_rows(x, eps);
  const std::size_t n_rows = x.size() / width;
  for (std::size_t r = 0; r < n_rows; ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < width; ++j) row[j] = row[j] * gamma[j] + beta[j];
  }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = gelu(v);
  return out;
}

Tensor mean_rows(const Tensor& x) {
  require_matrix(x, "mean_rows");
  Tensor out({x.cols()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(x.rows());
  for (auto& v : out.data()) v *= inv;
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t width) {
  require_matrix(x, "slice_cols");
  if (start + width > x.cols()) {
    throw DimensionError(fmt::format("column slice [{}, {}) outside {}", start, start + width,
                                     shape_string(x.shape())));
  }
  Tensor out({x.rows(), width});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < width; ++j) out.at(r, j) = x.at(r, start + j);
  return out;
}

void set_cols(Tensor& dst, std::size_t start, const Tensor& block) {
  require_matrix(dst, "set_cols");
  require_matrix(block, "set_cols");
  if (block.rows() != dst.rows() || start + block.cols() > dst.cols()) {
    throw DimensionError(fmt::format("cannot place {} at column {} of {}",
                                     shape_string(block.shape()), start,
                                     shape_string(dst.shape())));
  }
  for (std::size_t r = 0; r < block.rows(); ++r)
    for (std::size_t j = 0; j < block.cols(); ++j) dst.at(r, start + j) = block.at(r, j);
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_matrix(x, "slice_rows");
  if (start + count > x.rows()) {
    throw DimensionError(fmt::format("row slice [{}, {}) outside {}", start, start + count,
                                     shape_string(x.shape())));
  }
  const auto first = x.values().begin() + static_cast<std::ptrdiff_t>(start * x.cols());
  return Tensor({count, x.cols()},
                std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * x.cols())));
}

bool all_finite(const Tensor& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](double v) { return std::isfinite(v); });
}

void round_to_float32(Tensor& x) {
  for (auto& v : x.data()) v = static_cast<double>(static_cast<float>(v));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---- randomness ------------------------------------------------------------

std::uint64_t Prng::next_u64() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Prng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Prng::below(std::uint64_t n) {
  if (n == 0) throw InputError("Prng::below(0)");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Prng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  // FNV-1a over the tag, then one SplitMix64 round to decorrelate.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  Prng mix(base ^ h);
  return mix.next_u64();
}

Tensor seeded_normal(const Shape& shape, std::uint64_t seed, double scale) {
  if (!(scale > 0.0)) throw InputError("seeded_normal scale must be positive");
  Tensor out(shape);
  Prng rng(seed);
  for (auto& v : out.data()) v = scale * rng.normal();
  return out;
}

}  // namespace vlmpar
