#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace toilcast::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t rank() const { return shape.size(); }
  double item() const;

  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }
};

/// A trainable array. `fan_in` drives initialization; zero means the
/// parameter is a bias and starts at zero.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  std::size_t fan_in = 0;
  double fill = 0.0;  ///< initial value when fan_in is 0
};

/// Ordered, named parameter storage. Layers refer to entries by index, so a
/// copy of the set is a fully independent model.
class ParameterSet {
 public:
  std::size_t add(std::string name, Shape shape, std::size_t fan_in, double fill = 0.0);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  /// Throws if absent.
  std::size_t index_of(const std::string& name) const;

  std::vector<Parameter>::iterator begin() { return params_.begin(); }
  std::vector<Parameter>::iterator end() { return params_.end(); }
  std::vector<Parameter>::const_iterator begin() const { return params_.begin(); }
  std::vector<Parameter>::const_iterator end() const { return params_.end(); }

  std::size_t scalar_count() const;
  void zero_grad();
  /// FNV-1a over names, shapes and raw value bytes, as 16 hex digits.
  std::string checksum() const;

 private:
  std::vector<Parameter> params_;
};

/// Fan-in-scaled uniform init: weights in ±sqrt(6 / fan_in), biases zero.
void init_params(ParameterSet& params, std::uint64_t seed);

}  // namespace toilcast::nn
