#pragma once

#include <cstdint>
#include <vector>

#include "toilcast/tensor.hpp"

namespace toilcast::nn {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;  ///< first moments, shaped like the parameters
  std::vector<Tensor> v;  ///< second moments
};

/// Allocates zeroed moments matching `params`.
AdamState make_adam_state(const ParameterSet& params, double learning_rate, double beta1 = 0.9,
                          double beta2 = 0.999, double epsilon = 1e-8);

/// One bias-corrected Adam step from the gradients stored in `params`.
/// Throws NumericError naming the first parameter with a non-finite gradient;
/// nothing is modified in that case.
void adam_update(ParameterSet& params, AdamState& state);

/// Plain gradient descent, same error contract.
void sgd_update(ParameterSet& params, double learning_rate);

}  // namespace toilcast::nn
