#include "toilcast/optim.hpp"

#include <cmath>
#include <string>

#include "toilcast/errors.hpp"

namespace toilcast::nn {

namespace {

void check_finite_grads(const ParameterSet& params) {
  for (const Parameter& p : params) {
    for (std::size_t k = 0; k < p.grad.numel(); ++k) {
      if (!std::isfinite(p.grad.data[k])) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "' at entry " + std::to_string(k));
      }
    }
  }
}

}  // namespace

AdamState make_adam_state(const ParameterSet& params, double learning_rate, double beta1, double beta2,
                          double epsilon) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  for (const Parameter& p : params) {
    s.m.emplace_back(p.value.shape);
    s.v.emplace_back(p.value.shape);
  }
  return s;
}

void adam_update(ParameterSet& params, AdamState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ValidationError("Adam state does not match the parameter set");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].shape != params[i].value.shape || state.v[i].shape != params[i].value.shape) {
      throw ValidationError("Adam moments for '" + params[i].name + "' have the wrong shape");
    }
  }
  check_finite_grads(params);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    double* m = state.m[i].data.data();
    double* v = state.v[i].data.data();
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      const double g = p.grad.data[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p.value.data[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void sgd_update(ParameterSet& params, double learning_rate) {
  check_finite_grads(params);
  for (Parameter& p : params)
    for (std::size_t k = 0; k < p.value.numel(); ++k) p.value.data[k] -= learning_rate * p.grad.data[k];
}

}  // namespace toilcast::nn
