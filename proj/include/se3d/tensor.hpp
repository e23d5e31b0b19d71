#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace se3d {

// Extents of an N-dimensional array; every extent is >= 1.
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense row-major array of doubles. Values are immutable once an op has
/// produced them; in-place helpers below are reserved for optimizer state
/// and gradient accumulation.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v);

  bool defined() const { return !shape_.empty(); }
  int rank() const { return static_cast<int>(shape_.size()); }
  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  Tensor reshaped(Shape s) const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const;
  double abs_max() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

void add_inplace(Tensor& a, const Tensor& b);        // a += b
void axpy_inplace(Tensor& a, double s, const Tensor& b);  // a += s*b
void scale_inplace(Tensor& a, double s);
void fill_inplace(Tensor& a, double v);
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);

/// Round every value to the nearest 32-bit float. Training state is kept
/// f32-exact so checkpoints round-trip bit-for-bit.
void quantize_f32_inplace(Tensor& a);

}  // namespace se3d
