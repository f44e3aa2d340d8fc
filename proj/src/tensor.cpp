#include "mdchain/numeric/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "mdchain/error.hpp"

namespace mdchain::num {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("Tensor: shape holds " + std::to_string(shape_size(shape_)) +
                         " elements but " + std::to_string(data_.size()) + " were given");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, std::vector<double>{value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return 1;
  return shape_size(shape_) / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: operands must be matrices");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  Tensor out({a.rows(), b.cols()});
  out.mat().noalias() = a.mat() * b.mat();
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("softmax: axis out of range");
  for (double v : x.values()) {
    if (std::isnan(v)) throw NumericError("softmax: NaN input");
  }
  const auto& shape = x.shape();
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t extent = shape[axis];
  const std::size_t outer = x.size() / std::max<std::size_t>(1, extent * inner);

  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * extent * inner + in;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < extent; ++k) mx = std::max(mx, x[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < extent; ++k) {
        const double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < extent; ++k) out[base + k * inner] /= total;
    }
  }
  return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;
}  // namespace

// Eigen peels unaligned heads with scalar code, which would make results
// depend on the buffer address, so unaligned input goes through an aligned copy.
void gelu_inplace(std::span<double> values) {
  const auto n = static_cast<Eigen::Index>(values.size());
  const auto gelu = [](const auto& x) { return x / (1.0 + (-2.0 * kGeluC * (x + kGeluA * x.cube())).exp()); };
  if (reinterpret_cast<std::uintptr_t>(values.data()) % EIGEN_MAX_ALIGN_BYTES == 0) {
    Eigen::Map<Eigen::ArrayXd, Eigen::AlignedMax> x(values.data(), n);
    x = gelu(x);
  } else {
    const Eigen::ArrayXd x = ArrayMap(values.data(), n);
    const Eigen::ArrayXd y = gelu(x);
    ArrayMap(values.data(), n) = y;
  }
}

void gelu_backward(std::span<const double> x_values, std::span<const double> upstream, std::span<double> grad) {
  const auto n = static_cast<Eigen::Index>(x_values.size());
  const Eigen::ArrayXd x = ConstArrayMap(x_values.data(), n);
  const Eigen::ArrayXd dy = ConstArrayMap(upstream.data(), n);
  const Eigen::ArrayXd s = 1.0 / (1.0 + (-2.0 * kGeluC * (x + kGeluA * x.cube())).exp());
  const Eigen::ArrayXd d = dy * (s + 2.0 * x * s * (1.0 - s) * kGeluC * (1.0 + 3.0 * kGeluA * x.square()));
  ArrayMap(grad.data(), n) += d;
}

}  // namespace mdchain::num
