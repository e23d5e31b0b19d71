#include "se3d/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace se3d {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

static void check_shape(const Shape& s) {
  if (s.empty()) throw std::invalid_argument("tensor shape must have rank >= 1");
  for (int e : s) {
    if (e < 1) throw std::invalid_argument("tensor extent must be >= 1, got " + shape_str(s));
  }
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
    throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape_));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

namespace {

int64_t flat_index(const Shape& shape, std::initializer_list<int> idx) {
  if (idx.size() != shape.size()) throw std::invalid_argument("index rank mismatch");
  int64_t flat = 0;
  size_t i = 0;
  for (int v : idx) {
    if (v < 0 || v >= shape[i]) throw std::out_of_range("tensor index");
    flat = flat * shape[i] + v;
    ++i;
  }
  return flat;
}

}  // namespace

double& Tensor::at(std::initializer_list<int> idx) {
  return data_[static_cast<size_t>(flat_index(shape_, idx))];
}

double Tensor::at(std::initializer_list<int> idx) const {
  return data_[static_cast<size_t>(flat_index(shape_, idx))];
}

Tensor Tensor::reshaped(Shape s) const {
  if (shape_numel(s) != numel())
    throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(s));
  return Tensor(std::move(s), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

static void check_same(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

void add_inplace(Tensor& a, const Tensor& b) {
  check_same(a, b);
  double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) pa[i] += pb[i];
}

void axpy_inplace(Tensor& a, double s, const Tensor& b) {
  check_same(a, b);
  double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) pa[i] += s * pb[i];
}

void scale_inplace(Tensor& a, double s) {
  double* pa = a.data();
  for (int64_t i = 0; i < a.numel(); ++i) pa[i] *= s;
}

void fill_inplace(Tensor& a, double v) {
  double* pa = a.data();
  for (int64_t i = 0; i < a.numel(); ++i) pa[i] = v;
}

double dot(const Tensor& a, const Tensor& b) {
  check_same(a, b);
  double s = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) s += pa[i] * pb[i];
  return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

void quantize_f32_inplace(Tensor& a) {
  double* pa = a.data();
  for (int64_t i = 0; i < a.numel(); ++i) pa[i] = static_cast<double>(static_cast<float>(pa[i]));
}

}  // namespace se3d
