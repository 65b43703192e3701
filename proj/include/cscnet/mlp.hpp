#pragma once

// Two-layer perceptron: w2 * act(w1 * x + b1) + b2. Every instance owns its
// parameters; nothing is shared between instances.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cscnet/tensor.hpp"

namespace cscnet {

enum class Activation { relu };

template <class Real>
struct Mlp {
  TensorPtr<Real> w1;  // (hidden, in)
  TensorPtr<Real> b1;  // (hidden)
  TensorPtr<Real> w2;  // (out, hidden)
  TensorPtr<Real> b2;  // (out)
  Activation hidden_activation = Activation::relu;

  std::size_t input_width() const { return w1->shape[1]; }
  std::size_t hidden_width() const { return w1->shape[0]; }
  std::size_t output_width() const { return w2->shape[0]; }

  std::vector<TensorPtr<Real>> params() const { return {w1, b1, w2, b2}; }

  // Uniform [-a, a] with a = sqrt(6 / (fan_in + fan_out)) per matrix; zero biases.
  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
    auto uniform_matrix = [&rng](std::size_t rows, std::size_t cols) {
      const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
      std::uniform_real_distribution<double> dist(-a, a);
      std::vector<Real> v(rows * cols);
      for (Real& x : v) x = static_cast<Real>(dist(rng));
      return parameter<Real>({rows, cols}, std::move(v));
    };
    Mlp net;
    net.w1 = uniform_matrix(hidden, in);
    net.b1 = parameter<Real>({hidden}, std::vector<Real>(hidden, Real(0)));
    net.w2 = uniform_matrix(out, hidden);
    net.b2 = parameter<Real>({out}, std::vector<Real>(out, Real(0)));
    return net;
  }

  static Mlp zeros(std::size_t in, std::size_t hidden, std::size_t out) {
    Mlp net;
    net.w1 = parameter<Real>({hidden, in}, std::vector<Real>(hidden * in, Real(0)));
    net.b1 = parameter<Real>({hidden}, std::vector<Real>(hidden, Real(0)));
    net.w2 = parameter<Real>({out, hidden}, std::vector<Real>(out * hidden, Real(0)));
    net.b2 = parameter<Real>({out}, std::vector<Real>(out, Real(0)));
    return net;
  }
};

template <class Real>
TensorPtr<Real> mlp_forward(const Mlp<Real>& net, const TensorPtr<Real>& x) {
  if (x->shape.size() != 1 || x->numel() != net.input_width()) {
    throw std::runtime_error("mlp_forward: expected input width " +
                             std::to_string(net.input_width()) + ", got shape " +
                             shape_to_string(x->shape));
  }
  auto h = relu(add(matvec(net.w1, x), net.b1));
  return add(matvec(net.w2, h), net.b2);
}

}  // namespace cscnet
