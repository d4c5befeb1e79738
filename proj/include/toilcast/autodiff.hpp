#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "toilcast/rng.hpp"
#include "toilcast/tensor.hpp"

namespace toilcast::nn {

enum class Activation { identity, relu, tanh, sigmoid };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape. Every primitive appends one node whose inputs were
/// recorded earlier, so insertion order is a topological order. A tape is
/// single-owner; build a fresh one per forward pass.
class Tape {
 public:
  Var constant(Tensor value, std::string label = "constant");
  /// Non-parameter leaf whose gradient is tracked.
  Var variable(Tensor value, std::string label = "variable");
  /// Leaf bound to params[index]. Backward accumulates into its grad.
  Var parameter(ParameterSet& params, std::size_t index);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() output with respect to `v`.
  const Tensor& grad(Var v) const;
  const std::string& op(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(output) = `seed` (ones if empty) and propagates to every node,
  /// then adds leaf gradients into their parameters' grad tensors.
  void backward(Var output, const Tensor& seed = {});

  // Used by primitive implementations.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var push(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  Tensor& grad_mut(std::size_t id);
  const Tensor& value_at(std::size_t id) const;
  bool requires_grad(std::size_t id) const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    ParameterSet* params = nullptr;
    std::size_t param_index = 0;
    bool requires_grad = false;
  };
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Primitives. Shapes are noted as [batch, ...].

/// x [B, in], w [out, in], b [out] -> [B, out]: x·wᵀ + b.
Var affine(Tape& t, Var x, Var w, Var b);
Var activate(Tape& t, Var x, Activation a);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
Var square(Tape& t, Var a);
/// Sum of all entries, shape [1].
Var sum(Tape& t, Var a);
/// Concatenation along the last axis; leading dimensions must agree.
Var concat_last(Tape& t, std::span<const Var> parts);
Var reshape(Tape& t, Var a, Shape shape);
/// x [B, T, C] -> x[:, begin:end, :].
Var slice_steps(Tape& t, Var x, std::size_t begin, std::size_t end);
/// x [B, T, C] -> [B, C] at the final step.
Var last_step(Tape& t, Var x);
/// Causal dilated convolution, output length equals input length.
/// x [B, T, Cin], w [k, Cout, Cin], b [Cout] -> [B, T, Cout]; tap j reads
/// time t - (k-1-j)·dilation, with zeros before the sequence start.
Var causal_conv1d(Tape& t, Var x, Var w, Var b, std::size_t dilation);
/// Inverted dropout: entries are zeroed with probability `rate` and the
/// survivors scaled by 1/(1-rate). Rate 0 returns `x` unchanged.
Var dropout(Tape& t, Var x, double rate, Rng& rng);
/// Normalizes over the last axis, then applies per-feature gain and bias.
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);
/// Conv weight from direction v [k, Cout, Cin] and magnitude g [Cout]:
/// w[:, o, :] = g[o] · v[:, o, :] / |v[:, o, :]|.
Var weight_norm(Tape& t, Var v, Var g);

/// Mean absolute error, scalar.
Var mae_loss(Tape& t, Var pred, const Tensor& target);
/// Mean squared error, scalar.
Var mse_loss(Tape& t, Var pred, const Tensor& target);
/// pred [B, M·Q] laid out target-major with Q quantile slots per target,
/// target [B, M]. Returns the average over quantiles of each level's mean
/// pinball loss.
Var pinball_loss(Tape& t, Var pred, const Tensor& target, std::span<const double> alphas);

}  // namespace toilcast::nn
