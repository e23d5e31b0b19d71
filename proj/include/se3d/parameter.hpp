#pragma once

#include <string>
#include <utility>

#include "se3d/autodiff.hpp"

namespace se3d {

/// A named learnable leaf. The node persists across forward passes so
/// gradients accumulate until zero_grad().
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor init) : n_(Var::leaf(std::move(init), name).node()) {
    n_->ensure_grad();
  }

  bool defined() const { return n_ != nullptr; }
  const std::string& name() const { return n_->label; }
  Tensor& value() { return n_->value; }
  const Tensor& value() const { return n_->value; }
  Tensor& grad() { return n_->ensure_grad(); }
  const Shape& shape() const { return n_->value.shape(); }

  void zero_grad() { fill_inplace(n_->ensure_grad(), 0.0); }
  Var var() const { return Var(n_); }

 private:
  NodePtr n_;
};

}  // namespace se3d
