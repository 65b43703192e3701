#pragma once

// Dense tensors with taped reverse-mode differentiation. Values and gradients
// are contiguous buffers; every op that runs while recording is enabled
// attaches a closure that routes output gradients back to its inputs. A graph
// lives for one forward/backward pass and is confined to a single thread;
// leaf gradients accumulate additively until zeroed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cscnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

inline bool& grad_recording_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_recording() { return grad_recording_flag(); }

// Disables graph recording for its scope (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_recording_flag()) { grad_recording_flag() = false; }
  ~NoGradGuard() { grad_recording_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class Real>
struct Tensor {
  static_assert(std::is_floating_point_v<Real>);

  Shape shape;                // {} scalar, {n} vector, {rows, cols} matrix
  std::vector<Real> values;
  std::vector<Real> grad;     // always allocated, same length as values
  bool requires_grad = false;

  std::vector<std::shared_ptr<Tensor>> parents;
  std::function<void(const Tensor&)> backprop;  // scatters this->grad into parents

  Tensor(Shape s, std::vector<Real> v, bool rg)
      : shape(std::move(s)),
        values(std::move(v)),
        grad(values.size(), Real(0)),
        requires_grad(rg) {
    if (values.size() != shape_numel(shape)) {
      throw std::runtime_error("tensor: value count " + std::to_string(values.size()) +
                               " does not match shape " + shape_to_string(shape));
    }
  }

  std::size_t numel() const { return values.size(); }
  bool is_leaf() const { return parents.empty(); }

  Real item() const {
    if (numel() != 1) {
      throw std::runtime_error("tensor: item() requires a one-element tensor, got shape " +
                               shape_to_string(shape));
    }
    return values[0];
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }
};

template <class Real>
using TensorPtr = std::shared_ptr<Tensor<Real>>;

template <class Real>
TensorPtr<Real> constant(Shape shape, std::vector<Real> values) {
  return std::make_shared<Tensor<Real>>(std::move(shape), std::move(values), false);
}

template <class Real>
TensorPtr<Real> scalar_constant(Real v) {
  return constant<Real>({}, {v});
}

template <class Real>
TensorPtr<Real> parameter(Shape shape, std::vector<Real> values) {
  return std::make_shared<Tensor<Real>>(std::move(shape), std::move(values), true);
}

template <class Real>
bool all_finite(const Tensor<Real>& t) {
  for (Real v : t.values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// First index of the maximum; ties resolve to the lowest index.
template <class Real>
std::size_t argmax(std::span<const Real> v) {
  if (v.empty()) throw std::runtime_error("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

namespace detail {

template <class Real>
TensorPtr<Real> make_node(Shape shape, std::vector<Real> values,
                          std::vector<TensorPtr<Real>> parents,
                          std::function<void(const Tensor<Real>&)> backprop) {
  bool record = grad_recording();
  if (record) {
    record = false;
    for (const auto& p : parents) {
      if (p->requires_grad) {
        record = true;
        break;
      }
    }
  }
  auto node = std::make_shared<Tensor<Real>>(std::move(shape), std::move(values), record);
  if (record) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return node;
}

template <class Real>
void require_rank1(const TensorPtr<Real>& t, const char* op) {
  if (t->shape.size() != 1) {
    throw std::runtime_error(std::string(op) + ": expected a rank-1 tensor, got shape " +
                             shape_to_string(t->shape));
  }
}

template <class Real>
void require_same_shape(const TensorPtr<Real>& a, const TensorPtr<Real>& b, const char* op) {
  if (a->shape != b->shape) {
    throw std::runtime_error(std::string(op) + ": shape mismatch " + shape_to_string(a->shape) +
                             " vs " + shape_to_string(b->shape));
  }
}

}  // namespace detail

template <class Real>
TensorPtr<Real> add(const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<Real> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] + b->values[i];
  return detail::make_node<Real>(a->shape, std::move(out), {a, b},
                                 [a, b](const Tensor<Real>& o) {
                                   if (a->requires_grad)
                                     for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i];
                                   if (b->requires_grad)
                                     for (std::size_t i = 0; i < o.grad.size(); ++i) b->grad[i] += o.grad[i];
                                 });
}

template <class Real>
TensorPtr<Real> sub(const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<Real> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] - b->values[i];
  return detail::make_node<Real>(a->shape, std::move(out), {a, b},
                                 [a, b](const Tensor<Real>& o) {
                                   if (a->requires_grad)
                                     for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i];
                                   if (b->requires_grad)
                                     for (std::size_t i = 0; i < o.grad.size(); ++i) b->grad[i] -= o.grad[i];
                                 });
}

template <class Real>
TensorPtr<Real> scale(const TensorPtr<Real>& a, Real c) {
  std::vector<Real> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * c;
  return detail::make_node<Real>(a->shape, std::move(out), {a},
                                 [a, c](const Tensor<Real>& o) {
                                   if (!a->requires_grad) return;
                                   for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += c * o.grad[i];
                                 });
}

template <class Real>
TensorPtr<Real> neg(const TensorPtr<Real>& a) {
  return scale(a, Real(-1));
}

template <class Real>
TensorPtr<Real> one_minus(const TensorPtr<Real>& a) {
  std::vector<Real> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Real(1) - a->values[i];
  return detail::make_node<Real>(a->shape, std::move(out), {a},
                                 [a](const Tensor<Real>& o) {
                                   if (!a->requires_grad) return;
                                   for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] -= o.grad[i];
                                 });
}

template <class Real>
TensorPtr<Real> relu(const TensorPtr<Real>& a) {
  std::vector<Real> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] > Real(0) ? a->values[i] : Real(0);
  return detail::make_node<Real>(a->shape, std::move(out), {a},
                                 [a](const Tensor<Real>& o) {
                                   if (!a->requires_grad) return;
                                   for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                     if (a->values[i] > Real(0)) a->grad[i] += o.grad[i];
                                   }
                                 });
}

template <class Real>
TensorPtr<Real> sigmoid(const TensorPtr<Real>& a) {
  std::vector<Real> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real x = a->values[i];
    if (x >= Real(0)) {
      out[i] = Real(1) / (Real(1) + std::exp(-x));
    } else {
      const Real e = std::exp(x);
      out[i] = e / (Real(1) + e);
    }
  }
  return detail::make_node<Real>(a->shape, std::move(out), {a},
                                 [a](const Tensor<Real>& o) {
                                   if (!a->requires_grad) return;
                                   for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                     const Real s = o.values[i];
                                     a->grad[i] += o.grad[i] * s * (Real(1) - s);
                                   }
                                 });
}

template <class Real>
TensorPtr<Real> log(const TensorPtr<Real>& a) {
  std::vector<Real> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a->values[i]);
  return detail::make_node<Real>(a->shape, std::move(out), {a},
                                 [a](const Tensor<Real>& o) {
                                   if (!a->requires_grad) return;
                                   for (std::size_t i = 0; i < o.grad.size(); ++i)
                                     a->grad[i] += o.grad[i] / a->values[i];
                                 });
}

// Gradient passes through only where the input lies strictly inside [lo, hi].
template <class Real>
TensorPtr<Real> clamp(const TensorPtr<Real>& a, Real lo, Real hi) {
  if (!(lo <= hi)) throw std::runtime_error("clamp: lo must not exceed hi");
  std::vector<Real> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, a->values[i]));
  return detail::make_node<Real>(a->shape, std::move(out), {a},
                                 [a, lo, hi](const Tensor<Real>& o) {
                                   if (!a->requires_grad) return;
                                   for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                     const Real x = a->values[i];
                                     if (x > lo && x < hi) a->grad[i] += o.grad[i];
                                   }
                                 });
}

template <class Real>
TensorPtr<Real> concat(const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
  detail::require_rank1(a, "concat");
  detail::require_rank1(b, "concat");
  std::vector<Real> out;
  out.reserve(a->numel() + b->numel());
  out.insert(out.end(), a->values.begin(), a->values.end());
  out.insert(out.end(), b->values.begin(), b->values.end());
  const std::size_t na = a->numel();
  return detail::make_node<Real>({a->numel() + b->numel()}, std::move(out), {a, b},
                                 [a, b, na](const Tensor<Real>& o) {
                                   if (a->requires_grad)
                                     for (std::size_t i = 0; i < na; ++i) a->grad[i] += o.grad[i];
                                   if (b->requires_grad)
                                     for (std::size_t i = na; i < o.grad.size(); ++i)
                                       b->grad[i - na] += o.grad[i];
                                 });
}

template <class Real>
TensorPtr<Real> dot(const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
  detail::require_rank1(a, "dot");
  detail::require_same_shape(a, b, "dot");
  Real s = 0;
  for (std::size_t i = 0; i < a->numel(); ++i) s += a->values[i] * b->values[i];
  return detail::make_node<Real>({}, {s}, {a, b},
                                 [a, b](const Tensor<Real>& o) {
                                   const Real g = o.grad[0];
                                   if (a->requires_grad)
                                     for (std::size_t i = 0; i < a->grad.size(); ++i)
                                       a->grad[i] += g * b->values[i];
                                   if (b->requires_grad)
                                     for (std::size_t i = 0; i < b->grad.size(); ++i)
                                       b->grad[i] += g * a->values[i];
                                 });
}

template <class Real>
TensorPtr<Real> sum(const TensorPtr<Real>& a) {
  Real s = 0;
  for (Real v : a->values) s += v;
  return detail::make_node<Real>({}, {s}, {a},
                                 [a](const Tensor<Real>& o) {
                                   if (!a->requires_grad) return;
                                   const Real g = o.grad[0];
                                   for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
                                 });
}

// Picks one entry of a rank-1 tensor as a scalar node.
template <class Real>
TensorPtr<Real> select(const TensorPtr<Real>& a, std::size_t index) {
  detail::require_rank1(a, "select");
  if (index >= a->numel()) {
    throw std::runtime_error("select: index " + std::to_string(index) + " out of range for shape " +
                             shape_to_string(a->shape));
  }
  return detail::make_node<Real>({}, {a->values[index]}, {a},
                                 [a, index](const Tensor<Real>& o) {
                                   if (a->requires_grad) a->grad[index] += o.grad[0];
                                 });
}

// Stacks scalar nodes into a rank-1 tensor.
template <class Real>
TensorPtr<Real> stack(const std::vector<TensorPtr<Real>>& scalars) {
  if (scalars.empty()) throw std::runtime_error("stack: empty input");
  std::vector<Real> out(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) out[i] = scalars[i]->item();
  return detail::make_node<Real>({scalars.size()}, std::move(out), scalars,
                                 [](const Tensor<Real>& o) {
                                   for (std::size_t i = 0; i < o.parents.size(); ++i) {
                                     if (o.parents[i]->requires_grad) o.parents[i]->grad[0] += o.grad[i];
                                   }
                                 });
}

template <class Real>
TensorPtr<Real> softmax(const TensorPtr<Real>& a) {
  detail::require_rank1(a, "softmax");
  if (a->numel() == 0) throw std::runtime_error("softmax: empty input");
  const Real mx = *std::max_element(a->values.begin(), a->values.end());
  std::vector<Real> p(a->numel());
  Real z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(a->values[i] - mx);
    z += p[i];
  }
  for (Real& v : p) v /= z;
  return detail::make_node<Real>(a->shape, std::move(p), {a},
                                 [a](const Tensor<Real>& o) {
                                   if (!a->requires_grad) return;
                                   Real gp = 0;
                                   for (std::size_t i = 0; i < o.grad.size(); ++i) gp += o.grad[i] * o.values[i];
                                   for (std::size_t i = 0; i < o.grad.size(); ++i)
                                     a->grad[i] += o.values[i] * (o.grad[i] - gp);
                                 });
}

// y = W x for W (rows, cols) and x (cols).
template <class Real>
TensorPtr<Real> matvec(const TensorPtr<Real>& w, const TensorPtr<Real>& x) {
  if (w->shape.size() != 2) {
    throw std::runtime_error("matvec: expected a rank-2 matrix, got shape " + shape_to_string(w->shape));
  }
  detail::require_rank1(x, "matvec");
  const std::size_t rows = w->shape[0];
  const std::size_t cols = w->shape[1];
  if (x->numel() != cols) {
    throw std::runtime_error("matvec: expected input width " + std::to_string(cols) + ", got " +
                             std::to_string(x->numel()));
  }
  std::vector<Real> out(rows, Real(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* wr = w->values.data() + r * cols;
    Real s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x->values[c];
    out[r] = s;
  }
  return detail::make_node<Real>({rows}, std::move(out), {w, x},
                                 [w, x, rows, cols](const Tensor<Real>& o) {
                                   if (w->requires_grad) {
                                     for (std::size_t r = 0; r < rows; ++r) {
                                       const Real g = o.grad[r];
                                       if (g == Real(0)) continue;
                                       Real* gr = w->grad.data() + r * cols;
                                       for (std::size_t c = 0; c < cols; ++c) gr[c] += g * x->values[c];
                                     }
                                   }
                                   if (x->requires_grad) {
                                     for (std::size_t r = 0; r < rows; ++r) {
                                       const Real g = o.grad[r];
                                       if (g == Real(0)) continue;
                                       const Real* wr = w->values.data() + r * cols;
                                       for (std::size_t c = 0; c < cols; ++c) x->grad[c] += g * wr[c];
                                     }
                                   }
                                 });
}

// dot(u, v) / (|u| |v| + eps); a zero vector yields ~0 and a zero gradient.
template <class Real>
TensorPtr<Real> cosine_similarity(const TensorPtr<Real>& u, const TensorPtr<Real>& v,
                                  Real eps = Real(1e-12)) {
  detail::require_rank1(u, "cosine_similarity");
  detail::require_same_shape(u, v, "cosine_similarity");
  Real d = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u->numel(); ++i) {
    d += u->values[i] * v->values[i];
    uu += u->values[i] * u->values[i];
    vv += v->values[i] * v->values[i];
  }
  const Real nu = std::sqrt(uu);
  const Real nv = std::sqrt(vv);
  const Real denom = nu * nv + eps;
  const Real c = d / denom;
  return detail::make_node<Real>({}, {c}, {u, v},
                                 [u, v, nu, nv, denom, c](const Tensor<Real>& o) {
                                   if (nu == Real(0) || nv == Real(0)) return;
                                   const Real g = o.grad[0];
                                   if (u->requires_grad) {
                                     for (std::size_t i = 0; i < u->grad.size(); ++i) {
                                       u->grad[i] += g * (v->values[i] / denom -
                                                          c * (nv / denom) * (u->values[i] / nu));
                                     }
                                   }
                                   if (v->requires_grad) {
                                     for (std::size_t i = 0; i < v->grad.size(); ++i) {
                                       v->grad[i] += g * (u->values[i] / denom -
                                                          c * (nu / denom) * (v->values[i] / nv));
                                     }
                                   }
                                 });
}

template <class Real>
TensorPtr<Real> mean_of(const std::vector<TensorPtr<Real>>& scalars) {
  if (scalars.empty()) throw std::runtime_error("mean_of: empty input");
  return scale(sum(stack(scalars)), Real(1) / static_cast<Real>(scalars.size()));
}

// Accumulates d(loss)/d(tensor) into every reachable tensor with
// requires_grad. Interior gradients are reset first, so repeated passes stay
// additive at the leaves.
template <class Real>
void backward(const TensorPtr<Real>& loss) {
  if (!loss) throw std::runtime_error("backward: null tensor");
  if (loss->numel() != 1) {
    throw std::runtime_error("backward: loss must be scalar, got shape " + shape_to_string(loss->shape));
  }
  if (!loss->backprop) {
    throw std::runtime_error("backward: tensor was not produced by a recorded operation");
  }

  std::vector<Tensor<Real>*> order;  // post-order: parents before children
  std::unordered_set<const Tensor<Real>*> visited;
  struct Frame {
    Tensor<Real>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.get(), 0});
  visited.insert(loss.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Tensor<Real>* p = f.node->parents[f.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  for (Tensor<Real>* node : order) {
    if (!node->is_leaf()) node->zero_grad();
  }
  loss->grad[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

template <class Real>
void zero_grads(std::span<const TensorPtr<Real>> params) {
  for (const auto& p : params) p->zero_grad();
}

}  // namespace cscnet
