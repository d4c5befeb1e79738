#include "toilcast/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

#include "toilcast/errors.hpp"
#include "toilcast/rng.hpp"

namespace toilcast::nn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_numel(shape)) {
    throw ValidationError("tensor of shape " + shape_string(shape) + " given " + std::to_string(data.size()) +
                          " values");
  }
}

double Tensor::item() const {
  if (data.size() != 1) throw ValidationError("item() on tensor of shape " + shape_string(shape));
  return data[0];
}

std::size_t ParameterSet::add(std::string name, Shape shape, std::size_t fan_in, double fill) {
  for (const auto& p : params_) {
    if (p.name == name) throw ValidationError("duplicate parameter name '" + name + "'");
  }
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(shape);
  p.grad = Tensor(std::move(shape));
  p.fan_in = fan_in;
  p.fill = fill;
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ValidationError("no parameter named '" + name + "'");
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

std::string ParameterSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* bytes, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params_) {
    feed(p.name.data(), p.name.size());
    for (std::size_t d : p.value.shape) {
      const auto d64 = static_cast<std::uint64_t>(d);
      feed(&d64, sizeof d64);
    }
    feed(p.value.data.data(), p.value.data.size() * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void init_params(ParameterSet& params, std::uint64_t seed) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (p.fan_in == 0) {
      std::fill(p.value.data.begin(), p.value.data.end(), p.fill);
      continue;
    }
    Rng rng(derive_seed(seed, i));
    const double bound = std::sqrt(6.0 / static_cast<double>(p.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.value.data) v = dist(rng);
  }
}

}  // namespace toilcast::nn
