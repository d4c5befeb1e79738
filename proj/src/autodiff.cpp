#include "toilcast/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "toilcast/errors.hpp"
#include "toilcast/rng.hpp"

namespace toilcast::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw ValidationError("shape mismatch in " + op + ": " + detail);
}

}  // namespace

Activation activation_from_name(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ValidationError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw ValidationError("op '" + op + "' references a value not on this tape");
  }
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (std::size_t in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value, std::string label) { return push(std::move(label), std::move(value), {}, nullptr); }

Var Tape::variable(Tensor value, std::string label) {
  Var v = push(std::move(label), std::move(value), {}, nullptr);
  nodes_[v.id].requires_grad = true;
  return v;
}

bool Tape::requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

Var Tape::parameter(ParameterSet& params, std::size_t index) {
  if (index >= params.size()) throw ValidationError("parameter index out of range");
  Node n;
  n.op = "param:" + params[index].name;
  n.params = &params;
  n.param_index = index;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw ValidationError("value is not recorded on this tape");
  return nodes_[v.id];
}

const Tensor& Tape::value_at(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.params ? (*n.params)[n.param_index].value : n.value;
}

const Tensor& Tape::value(Var v) const {
  node(v);
  return value_at(v.id);
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!backward_done_) throw ValidationError("gradient requested before backward()");
  return n.grad;
}

const std::string& Tape::op(Var v) const { return node(v).op; }

Tensor& Tape::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor(value_at(id).shape);
  return n.grad;
}

void Tape::backward(Var output, const Tensor& seed) {
  if (nodes_.empty() || output.id >= nodes_.size()) {
    throw ValidationError("backward() called before a forward pass recorded the output");
  }
  for (Node& n : nodes_) n.grad = Tensor();
  const Tensor& out = value_at(output.id);
  Tensor& g = grad_mut(output.id);
  if (seed.data.empty()) {
    std::fill(g.data.begin(), g.data.end(), 1.0);
  } else {
    if (seed.numel() != out.numel()) shape_error("backward", "seed does not match output shape");
    g.data = seed.data;
  }
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.data.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.params) {
      Tensor& pg = (*n.params)[n.param_index].grad;
      for (std::size_t k = 0; k < pg.data.size(); ++k) pg.data[k] += n.grad.data[k];
    }
  }
  for (Node& n : nodes_) {
    if (n.grad.data.empty()) n.grad = Tensor(value_at(static_cast<std::size_t>(&n - nodes_.data())).shape);
  }
  backward_done_ = true;
}

// ---------------------------------------------------------------------------
// Primitives


Var affine(Tape& t, Var x, Var w, Var b) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  const Tensor& bv = t.value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || wv.dim(1) != xv.dim(1) || bv.dim(0) != wv.dim(0)) {
    shape_error("affine at " + t.op(w), "input " + shape_string(xv.shape) + ", weight " + shape_string(wv.shape) +
                                            ", bias " + shape_string(bv.shape));
  }
  const std::size_t B = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  Tensor y({B, out});
  auto Y = as_matrix(y, B, out);
  Y.noalias() = as_matrix(xv, B, in) * as_matrix(wv, out, in).transpose();
  Y.rowwise() += ConstVecMap(bv.data.data(), static_cast<Eigen::Index>(out));
  const std::size_t xi = x.id, wi = w.id, bi = b.id;
  return t.push("affine", std::move(y), {xi, wi, bi}, [=](Tape& tp, std::size_t self) {
    const auto GY = as_matrix(tp.grad_mut(self), B, out);
    if (tp.requires_grad(xi)) as_matrix(tp.grad_mut(xi), B, in).noalias() += GY * as_matrix(tp.value_at(wi), out, in);
    if (tp.requires_grad(wi))
      as_matrix(tp.grad_mut(wi), out, in).noalias() += GY.transpose() * as_matrix(tp.value_at(xi), B, in);
    if (tp.requires_grad(bi)) VecMap(tp.grad_mut(bi).data.data(), static_cast<Eigen::Index>(out)) += GY.colwise().sum();
  });
}

Var activate(Tape& t, Var x, Activation a) {
  const Tensor& xv = t.value(x);
  Tensor y = xv;
  switch (a) {
    case Activation::identity: break;
    case Activation::relu:
      for (double& v : y.data) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::tanh:
      for (double& v : y.data) v = std::tanh(v);
      break;
    case Activation::sigmoid:
      for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
      break;
  }
  const std::size_t xi = x.id;
  return t.push(activation_name(a), std::move(y), {xi}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.grad_mut(self);
    const Tensor& yv = tp.value_at(self);
    const Tensor& xin = tp.value_at(xi);
    Tensor& gx = tp.grad_mut(xi);
    for (std::size_t k = 0; k < gy.data.size(); ++k) {
      double d = 1.0;
      switch (a) {
        case Activation::identity: break;
        case Activation::relu: d = xin.data[k] > 0.0 ? 1.0 : 0.0; break;
        case Activation::tanh: d = 1.0 - yv.data[k] * yv.data[k]; break;
        case Activation::sigmoid: d = yv.data[k] * (1.0 - yv.data[k]); break;
      }
      gx.data[k] += gy.data[k] * d;
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.shape != bv.shape) shape_error("add", shape_string(av.shape) + " vs " + shape_string(bv.shape));
  Tensor y = av;
  for (std::size_t k = 0; k < y.data.size(); ++k) y.data[k] += bv.data[k];
  const std::size_t ai = a.id, bi = b.id;
  return t.push("add", std::move(y), {ai, bi}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.grad_mut(self);
    Tensor& ga = tp.grad_mut(ai);
    for (std::size_t k = 0; k < gy.data.size(); ++k) ga.data[k] += gy.data[k];
    Tensor& gb = tp.grad_mut(bi);
    for (std::size_t k = 0; k < gy.data.size(); ++k) gb.data[k] += gy.data[k];
  });
}

Var scale(Tape& t, Var a, double factor) {
  Tensor y = t.value(a);
  for (double& v : y.data) v *= factor;
  const std::size_t ai = a.id;
  return t.push("scale", std::move(y), {ai}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.grad_mut(self);
    Tensor& ga = tp.grad_mut(ai);
    for (std::size_t k = 0; k < gy.data.size(); ++k) ga.data[k] += factor * gy.data[k];
  });
}

Var square(Tape& t, Var a) {
  Tensor y = t.value(a);
  for (double& v : y.data) v *= v;
  const std::size_t ai = a.id;
  return t.push("square", std::move(y), {ai}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.grad_mut(self);
    const Tensor& av = tp.value_at(ai);
    Tensor& ga = tp.grad_mut(ai);
    for (std::size_t k = 0; k < gy.data.size(); ++k) ga.data[k] += 2.0 * av.data[k] * gy.data[k];
  });
}

Var sum(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  double s = 0.0;
  for (double v : av.data) s += v;
  const std::size_t ai = a.id;
  return t.push("sum", Tensor::scalar(s), {ai}, [=](Tape& tp, std::size_t self) {
    const double g = tp.grad_mut(self).data[0];
    for (double& v : tp.grad_mut(ai).data) v += g;
  });
}

Var concat_last(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const Shape& first = t.value(parts[0]).shape;
  if (first.empty()) shape_error("concat", "scalar input");
  const std::size_t rows = shape_numel(first) / first.back();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (Var p : parts) {
    const Shape& s = t.value(p).shape;
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      shape_error("concat at " + t.op(p), shape_string(s) + " vs " + shape_string(first));
    }
    widths.push_back(s.back());
    ids.push_back(p.id);
    total += s.back();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor y(out_shape);
  std::size_t col = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const Tensor& v = t.value_at(ids[k]);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data.begin() + r * widths[k], widths[k], y.data.begin() + r * total + col);
    col += widths[k];
  }
  return t.push("concat", std::move(y), ids, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.grad_mut(self);
    std::size_t c = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor& g = tp.grad_mut(ids[k]);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < widths[k]; ++j) g.data[r * widths[k] + j] += gy.data[r * total + c + j];
      c += widths[k];
    }
  });
}

Var reshape(Tape& t, Var a, Shape shape) {
  const Tensor& av = t.value(a);
  if (shape_numel(shape) != av.numel()) {
    shape_error("reshape at " + t.op(a), shape_string(av.shape) + " to " + shape_string(shape));
  }
  Tensor y(std::move(shape), av.data);
  const std::size_t ai = a.id;
  return t.push("reshape", std::move(y), {ai}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.grad_mut(self);
    Tensor& ga = tp.grad_mut(ai);
    for (std::size_t k = 0; k < gy.data.size(); ++k) ga.data[k] += gy.data[k];
  });
}

Var slice_steps(Tape& t, Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = t.value(x);
  if (xv.rank() != 3 || begin >= end || end > xv.dim(1)) {
    shape_error("slice_steps at " + t.op(x), "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                                 ") of " + shape_string(xv.shape));
  }
  const std::size_t B = xv.dim(0), T = xv.dim(1), C = xv.dim(2), S = end - begin;
  Tensor y({B, S, C});
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(xv.data.begin() + (b * T + begin) * C, S * C, y.data.begin() + b * S * C);
  const std::size_t xi = x.id;
  return t.push("slice_steps", std::move(y), {xi}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.grad_mut(self);
    Tensor& gx = tp.grad_mut(xi);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < S * C; ++k) gx.data[(b * T + begin) * C + k] += gy.data[b * S * C + k];
  });
}

Var last_step(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  if (xv.rank() != 3) shape_error("last_step at " + t.op(x), "expected [B,T,C], got " + shape_string(xv.shape));
  const std::size_t B = xv.dim(0), T = xv.dim(1), C = xv.dim(2);
  return reshape(t, slice_steps(t, x, T - 1, T), {B, C});
}

Var causal_conv1d(Tape& t, Var x, Var w, Var b, std::size_t dilation) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  const Tensor& bv = t.value(b);
  if (dilation < 1) throw ValidationError("dilation must be at least 1");
  if (xv.rank() != 3 || wv.rank() != 3 || bv.rank() != 1 || wv.dim(2) != xv.dim(2) || bv.dim(0) != wv.dim(1)) {
    shape_error("causal_conv1d at " + t.op(w), "input " + shape_string(xv.shape) + ", weight " +
                                                   shape_string(wv.shape) + ", bias " + shape_string(bv.shape));
  }
  const std::size_t B = xv.dim(0), T = xv.dim(1), Cin = xv.dim(2);
  const std::size_t K = wv.dim(0), Cout = wv.dim(1);
  if (T == 0) throw ValidationError("causal_conv1d on an empty sequence");
  if (K == 0) throw ValidationError("kernel size must be at least 1");
  Tensor y({B, T, Cout});
  for (std::size_t bb = 0; bb < B; ++bb) {
    auto Y = MatMap(y.data.data() + bb * T * Cout, static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(Cout));
    Y.rowwise() = ConstVecMap(bv.data.data(), static_cast<Eigen::Index>(Cout));
    const auto X = ConstMatMap(xv.data.data() + bb * T * Cin, static_cast<Eigen::Index>(T),
                               static_cast<Eigen::Index>(Cin));
    for (std::size_t j = 0; j < K; ++j) {
      const std::size_t shift = (K - 1 - j) * dilation;
      if (shift >= T) continue;
      const auto Wj = ConstMatMap(wv.data.data() + j * Cout * Cin, static_cast<Eigen::Index>(Cout),
                                  static_cast<Eigen::Index>(Cin));
      const auto rows = static_cast<Eigen::Index>(T - shift);
      Y.bottomRows(rows).noalias() += X.topRows(rows) * Wj.transpose();
    }
  }
  const std::size_t xi = x.id, wi = w.id, bi = b.id;
  return t.push("causal_conv1d", std::move(y), {xi, wi, bi}, [=](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.grad_mut(self);
    const Tensor& xin = tp.value_at(xi);
    const Tensor& win = tp.value_at(wi);
    const bool need_x = tp.requires_grad(xi);
    Tensor& gx = tp.grad_mut(xi);
    Tensor& gw = tp.grad_mut(wi);
    auto GB = VecMap(tp.grad_mut(bi).data.data(), static_cast<Eigen::Index>(Cout));
    for (std::size_t bb = 0; bb < B; ++bb) {
      const auto GY = ConstMatMap(gy.data.data() + bb * T * Cout, static_cast<Eigen::Index>(T),
                                  static_cast<Eigen::Index>(Cout));
      const auto X = ConstMatMap(xin.data.data() + bb * T * Cin, static_cast<Eigen::Index>(T),
                                 static_cast<Eigen::Index>(Cin));
      auto GX = MatMap(gx.data.data() + bb * T * Cin, static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(Cin));
      GB += GY.colwise().sum();
      for (std::size_t j = 0; j < K; ++j) {
        const std::size_t shift = (K - 1 - j) * dilation;
        if (shift >= T) continue;
        const auto rows = static_cast<Eigen::Index>(T - shift);
        const auto Wj = ConstMatMap(win.data.data() + j * Cout * Cin, static_cast<Eigen::Index>(Cout),
                                    static_cast<Eigen::Index>(Cin));
        auto GWj = MatMap(gw.data.data() + j * Cout * Cin, static_cast<Eigen::Index>(Cout),
                          static_cast<Eigen::Index>(Cin));
        if (need_x) GX.topRows(rows).noalias() += GY.bottomRows(rows) * Wj;
        GWj.noalias() += GY.bottomRows(rows).transpose() * X.topRows(rows);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses

Var dropout(Tape& t, Var x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ValidationError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const Tensor& xv = t.value(x);
  std::vector<double> mask(xv.numel());
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  for (double& m : mask) m = keep(rng) ? inv : 0.0;
  Tensor y = xv;
  for (std::size_t k = 0; k < mask.size(); ++k) y.data[k] *= mask[k];
  const std::size_t xi = x.id;
  return t.push("dropout", std::move(y), {xi}, [xi, mask = std::move(mask)](Tape& tp, std::size_t self) {
    const Tensor& gy = tp.grad_mut(self);
    Tensor& gx = tp.grad_mut(xi);
    for (std::size_t k = 0; k < mask.size(); ++k) gx.data[k] += mask[k] * gy.data[k];
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  if (xv.rank() < 1) shape_error("layer_norm at " + t.op(x), "scalar input");
  const std::size_t D = xv.shape.back();
  if (gv.numel() != D || bv.numel() != D) {
    shape_error("layer_norm at " + t.op(gain), "features " + std::to_string(D) + ", gain " + shape_string(gv.shape) +
                                                   ", bias " + shape_string(bv.shape));
  }
  const std::size_t rows = xv.numel() / D;
  std::vector<double> xhat(xv.numel()), inv_std(rows);
  Tensor y(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = &xv.data[r * D];
    double mean = 0.0;
    for (std::size_t k = 0; k < D; ++k) mean += row[k];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t k = 0; k < D; ++k) var += (row[k] - mean) * (row[k] - mean);
    var /= static_cast<double>(D);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t k = 0; k < D; ++k) {
      xhat[r * D + k] = (row[k] - mean) * inv_std[r];
      y.data[r * D + k] = xhat[r * D + k] * gv.data[k] + bv.data[k];
    }
  }
  const std::size_t xi = x.id, gi = gain.id, bi = bias.id;
  return t.push("layer_norm", std::move(y), {xi, gi, bi},
                [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
                  const Tensor& gy = tp.grad_mut(self);
                  const Tensor& g = tp.value_at(gi);
                  if (tp.requires_grad(gi) || tp.requires_grad(bi)) {
                    Tensor& gg = tp.grad_mut(gi);
                    Tensor& gb = tp.grad_mut(bi);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t k = 0; k < D; ++k) {
                        gg.data[k] += gy.data[r * D + k] * xhat[r * D + k];
                        gb.data[k] += gy.data[r * D + k];
                      }
                  }
                  if (!tp.requires_grad(xi)) return;
                  Tensor& gx = tp.grad_mut(xi);
                  const double n = static_cast<double>(D);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t k = 0; k < D; ++k) {
                      const double d = gy.data[r * D + k] * g.data[k];
                      s1 += d;
                      s2 += d * xhat[r * D + k];
                    }
                    for (std::size_t k = 0; k < D; ++k) {
                      const double d = gy.data[r * D + k] * g.data[k];
                      gx.data[r * D + k] += inv_std[r] * (d - s1 / n - xhat[r * D + k] * s2 / n);
                    }
                  }
                });
}

Var weight_norm(Tape& t, Var v, Var g) {
  const Tensor& vv = t.value(v);
  const Tensor& gv = t.value(g);
  if (vv.rank() != 3 || gv.numel() != vv.dim(1)) {
    shape_error("weight_norm at " + t.op(v), "direction " + shape_string(vv.shape) + ", magnitude " +
                                                 shape_string(gv.shape));
  }
  const std::size_t K = vv.dim(0), O = vv.dim(1), I = vv.dim(2);
  std::vector<double> norm(O, 0.0);
  for (std::size_t j = 0; j < K; ++j)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < I; ++i) norm[o] += vv.data[(j * O + o) * I + i] * vv.data[(j * O + o) * I + i];
  for (double& n : norm) {
    if (!(n > 0.0)) throw NumericError("weight_norm direction has zero norm");
    n = std::sqrt(n);
  }
  Tensor w(vv.shape);
  for (std::size_t j = 0; j < K; ++j)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < I; ++i) {
        const std::size_t k = (j * O + o) * I + i;
        w.data[k] = gv.data[o] * vv.data[k] / norm[o];
      }
  const std::size_t vi = v.id, gi = g.id;
  return t.push("weight_norm", std::move(w), {vi, gi}, [=, norm = std::move(norm)](Tape& tp, std::size_t self) {
    const Tensor& gw = tp.grad_mut(self);
    const Tensor& vval = tp.value_at(vi);
    const Tensor& gval = tp.value_at(gi);
    // dot[o] = sum over the channel of gw * v / |v|
    std::vector<double> dot(O, 0.0);
    for (std::size_t j = 0; j < K; ++j)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t i = 0; i < I; ++i) {
          const std::size_t k = (j * O + o) * I + i;
          dot[o] += gw.data[k] * vval.data[k] / norm[o];
        }
    if (tp.requires_grad(gi)) {
      Tensor& gg = tp.grad_mut(gi);
      for (std::size_t o = 0; o < O; ++o) gg.data[o] += dot[o];
    }
    if (tp.requires_grad(vi)) {
      Tensor& gvv = tp.grad_mut(vi);
      for (std::size_t j = 0; j < K; ++j)
        for (std::size_t o = 0; o < O; ++o)
          for (std::size_t i = 0; i < I; ++i) {
            const std::size_t k = (j * O + o) * I + i;
            gvv.data[k] += gval.data[o] / norm[o] * (gw.data[k] - dot[o] * vval.data[k] / norm[o]);
          }
    }
  });
}

namespace {

void check_target(const char* op, const Tensor& pred, const Tensor& target, std::size_t slots) {
  if (pred.numel() != target.numel() * slots || pred.numel() == 0) {
    shape_error(op, "prediction " + shape_string(pred.shape) + " vs target " + shape_string(target.shape));
  }
}

}  // namespace

Var mae_loss(Tape& t, Var pred, const Tensor& target) {
  const Tensor& pv = t.value(pred);
  check_target("mae_loss", pv, target, 1);
  const double n = static_cast<double>(pv.numel());
  double s = 0.0;
  for (std::size_t k = 0; k < pv.numel(); ++k) s += std::abs(pv.data[k] - target.data[k]);
  const std::size_t pi = pred.id;
  return t.push("mae_loss", Tensor::scalar(s / n), {pi}, [=](Tape& tp, std::size_t self) {
    const double g = tp.grad_mut(self).data[0] / n;
    const Tensor& p = tp.value_at(pi);
    Tensor& gp = tp.grad_mut(pi);
    for (std::size_t k = 0; k < p.numel(); ++k) {
      const double d = p.data[k] - target.data[k];
      gp.data[k] += d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
    }
  });
}

Var mse_loss(Tape& t, Var pred, const Tensor& target) {
  const Tensor& pv = t.value(pred);
  check_target("mse_loss", pv, target, 1);
  const double n = static_cast<double>(pv.numel());
  double s = 0.0;
  for (std::size_t k = 0; k < pv.numel(); ++k) s += (pv.data[k] - target.data[k]) * (pv.data[k] - target.data[k]);
  const std::size_t pi = pred.id;
  return t.push("mse_loss", Tensor::scalar(s / n), {pi}, [=](Tape& tp, std::size_t self) {
    const double g = tp.grad_mut(self).data[0] / n;
    const Tensor& p = tp.value_at(pi);
    Tensor& gp = tp.grad_mut(pi);
    for (std::size_t k = 0; k < p.numel(); ++k) gp.data[k] += 2.0 * g * (p.data[k] - target.data[k]);
  });
}

Var pinball_loss(Tape& t, Var pred, const Tensor& target, std::span<const double> alphas) {
  const Tensor& pv = t.value(pred);
  const std::size_t Q = alphas.size();
  if (Q == 0) throw ValidationError("pinball_loss needs at least one quantile level");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw ValidationError("quantile level must lie in (0, 1)");
  }
  check_target("pinball_loss", pv, target, Q);
  const std::size_t n = target.numel();
  const double norm = static_cast<double>(n) * static_cast<double>(Q);
  std::vector<double> levels(alphas.begin(), alphas.end());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q = 0; q < Q; ++q) {
      const double u = target.data[i] - pv.data[i * Q + q];
      s += std::max(levels[q] * u, (levels[q] - 1.0) * u);
    }
  }
  const std::size_t pi = pred.id;
  return t.push("pinball_loss", Tensor::scalar(s / norm), {pi}, [=](Tape& tp, std::size_t self) {
    const double g = tp.grad_mut(self).data[0] / norm;
    const Tensor& p = tp.value_at(pi);
    Tensor& gp = tp.grad_mut(pi);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t q = 0; q < Q; ++q) {
        const double u = target.data[i] - p.data[i * Q + q];
        gp.data[i * Q + q] += u > 0.0 ? -levels[q] * g : (u < 0.0 ? (1.0 - levels[q]) * g : 0.0);
      }
    }
  });
}

}  // namespace toilcast::nn
