#pragma once

// The cascaded network: both class-specified cascade branches, the
// composition branch, the parametric and non-parametric classifier heads,
// the joint loss, and the fused inference score.
//
// Cascade conditioning is a hard argmax with a gradient stop: the predicted
// class row enters the second stage as a constant, so no gradient reaches the
// first-stage head through the prediction.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cscnet/data.hpp"
#include "cscnet/mlp.hpp"
#include "cscnet/semantics.hpp"
#include "cscnet/tensor.hpp"

namespace cscnet {

enum class ClassifierKind { parametric, nonparametric };

inline const char* to_string(ClassifierKind kind) {
  return kind == ClassifierKind::parametric ? "parametric" : "nonparametric";
}

inline ClassifierKind classifier_kind_from_string(const std::string& s) {
  if (s == "parametric") return ClassifierKind::parametric;
  if (s == "nonparametric") return ClassifierKind::nonparametric;
  throw std::runtime_error("unknown classifier kind '" + s + "'");
}

struct ModelDims {
  std::size_t d_x = 32;    // feature width
  std::size_t d = 16;      // semantic width
  std::size_t d_v = 16;    // extracted visual width
  std::size_t d_c = 16;    // composition width
  std::size_t hidden = 16; // hidden width of every two-layer net
};

template <class Real>
struct CscNet {
  ModelDims dims;
  ClassifierKind primitive_cls = ClassifierKind::parametric;
  ClassifierKind composition_cls = ClassifierKind::nonparametric;

  // Declared order is also the checkpoint order.
  Mlp<Real> e_a, e_o, e_a2o, e_o2a, e_c;
  Mlp<Real> scorer_a, scorer_o, scorer_a2o, scorer_o2a;
  Mlp<Real> composer;
  Mlp<Real> scorer_c;  // used only when composition_cls is parametric

  static CscNet init(const ModelDims& dims, ClassifierKind primitive, ClassifierKind composition,
                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CscNet net;
    net.dims = dims;
    net.primitive_cls = primitive;
    net.composition_cls = composition;
    net.e_a = Mlp<Real>::init(dims.d_x, dims.hidden, dims.d_v, rng);
    net.e_o = Mlp<Real>::init(dims.d_x, dims.hidden, dims.d_v, rng);
    net.e_a2o = Mlp<Real>::init(dims.d_x + dims.d, dims.hidden, dims.d_v, rng);
    net.e_o2a = Mlp<Real>::init(dims.d_x + dims.d, dims.hidden, dims.d_v, rng);
    net.e_c = Mlp<Real>::init(dims.d_x, dims.hidden, dims.d_c, rng);
    net.scorer_a = Mlp<Real>::init(dims.d_v + dims.d, dims.hidden, 1, rng);
    net.scorer_o = Mlp<Real>::init(dims.d_v + dims.d, dims.hidden, 1, rng);
    net.scorer_a2o = Mlp<Real>::init(dims.d_v + dims.d, dims.hidden, 1, rng);
    net.scorer_o2a = Mlp<Real>::init(dims.d_v + dims.d, dims.hidden, 1, rng);
    net.composer = Mlp<Real>::init(2 * dims.d, dims.hidden, dims.d_c, rng);
    net.scorer_c = Mlp<Real>::init(2 * dims.d_c, dims.hidden, 1, rng);
    return net;
  }

  std::vector<std::pair<std::string, Mlp<Real>>> named_networks() const {
    return {{"e_a", e_a},           {"e_o", e_o},
            {"e_a2o", e_a2o},       {"e_o2a", e_o2a},
            {"e_c", e_c},           {"scorer_a", scorer_a},
            {"scorer_o", scorer_o}, {"scorer_a2o", scorer_a2o},
            {"scorer_o2a", scorer_o2a}, {"composer", composer},
            {"scorer_c", scorer_c}};
  }

  std::vector<std::pair<std::string, TensorPtr<Real>>> named_parameters() const {
    std::vector<std::pair<std::string, TensorPtr<Real>>> out;
    static const char* part_names[4] = {"w1", "b1", "w2", "b2"};
    for (const auto& [name, net] : named_networks()) {
      const auto parts = net.params();
      for (std::size_t i = 0; i < parts.size(); ++i) {
        out.emplace_back(name + "." + part_names[i], parts[i]);
      }
    }
    return out;
  }

  std::vector<TensorPtr<Real>> parameters() const {
    std::vector<TensorPtr<Real>> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  void zero_grads() const {
    for (const auto& p : parameters()) p->zero_grad();
  }
};

template <class Real>
struct BranchOutput {
  TensorPtr<Real> primitive_scores;    // first-stage scores over its classes
  std::size_t predicted_id = 0;        // argmax of primitive_scores, ties to lowest index
  TensorPtr<Real> conditioned_scores;  // second-stage scores over the other primitive
};

// Sigmoid(MLP(Concat(v, S_i))) per class row. Scores lie strictly in (0,1).
template <class Real>
TensorPtr<Real> param_cls(const Mlp<Real>& scorer, const TensorPtr<Real>& v,
                          std::span<const TensorPtr<Real>> class_rows) {
  if (class_rows.empty()) throw std::runtime_error("param_cls: class table is empty");
  if (scorer.output_width() != 1) {
    throw std::runtime_error("param_cls: scorer output width must be 1, got " +
                             std::to_string(scorer.output_width()));
  }
  std::vector<TensorPtr<Real>> logits;
  logits.reserve(class_rows.size());
  for (const auto& row : class_rows) {
    logits.push_back(select(mlp_forward(scorer, concat(v, row)), 0));
  }
  return sigmoid(stack(logits));
}

// Softmax over cosine similarities sharpened by the temperature.
template <class Real>
TensorPtr<Real> non_param_cls(const TensorPtr<Real>& v, std::span<const TensorPtr<Real>> class_rows,
                              Real temperature) {
  if (class_rows.empty()) throw std::runtime_error("non_param_cls: class table is empty");
  if (!(temperature > Real(0))) throw std::runtime_error("non_param_cls: temperature must be positive");
  if (!all_finite(*v)) throw std::runtime_error("non_param_cls: non-finite input");
  std::vector<TensorPtr<Real>> logits;
  logits.reserve(class_rows.size());
  for (const auto& row : class_rows) {
    if (!all_finite(*row)) throw std::runtime_error("non_param_cls: non-finite class row");
    logits.push_back(scale(cosine_similarity(v, row), Real(1) / temperature));
  }
  return softmax(stack(logits));
}

template <class Real>
TensorPtr<Real> classify(ClassifierKind kind, const Mlp<Real>& scorer, const TensorPtr<Real>& v,
                         std::span<const TensorPtr<Real>> class_rows, Real temperature) {
  return kind == ClassifierKind::parametric ? param_cls(scorer, v, class_rows)
                                            : non_param_cls(v, class_rows, temperature);
}

// Attribute first, then attribute-specified object classification. When
// forced_first is set (teacher forcing) it replaces the argmax prediction as
// the conditioning class; scores are still reported for the loss.
template <class Real>
BranchOutput<Real> forward_a2o(const CscNet<Real>& model, const TensorPtr<Real>& phi,
                               const SemanticSpace<Real>& space, Real temperature,
                               std::optional<std::size_t> forced_first = std::nullopt) {
  auto v_a = mlp_forward(model.e_a, phi);
  auto attr_scores =
      classify<Real>(model.primitive_cls, model.scorer_a, v_a, space.attr_rows, temperature);
  std::size_t a_hat = argmax(std::span<const Real>(attr_scores->values));
  if (forced_first) {
    if (*forced_first >= space.n_attrs()) {
      throw std::runtime_error("forward_a2o: forced attribute id out of range");
    }
    a_hat = *forced_first;
  }
  // Constant row lookup; the argmax path carries no gradient.
  auto v_a2o = mlp_forward(model.e_a2o, concat(phi, space.attr_rows[a_hat]));
  auto obj_scores =
      classify<Real>(model.primitive_cls, model.scorer_a2o, v_a2o, space.obj_rows, temperature);
  return {std::move(attr_scores), a_hat, std::move(obj_scores)};
}

template <class Real>
BranchOutput<Real> forward_o2a(const CscNet<Real>& model, const TensorPtr<Real>& phi,
                               const SemanticSpace<Real>& space, Real temperature,
                               std::optional<std::size_t> forced_first = std::nullopt) {
  auto v_o = mlp_forward(model.e_o, phi);
  auto obj_scores =
      classify<Real>(model.primitive_cls, model.scorer_o, v_o, space.obj_rows, temperature);
  std::size_t o_hat = argmax(std::span<const Real>(obj_scores->values));
  if (forced_first) {
    if (*forced_first >= space.n_objs()) {
      throw std::runtime_error("forward_o2a: forced object id out of range");
    }
    o_hat = *forced_first;
  }
  auto v_o2a = mlp_forward(model.e_o2a, concat(phi, space.obj_rows[o_hat]));
  auto attr_scores =
      classify<Real>(model.primitive_cls, model.scorer_o2a, v_o2a, space.attr_rows, temperature);
  return {std::move(obj_scores), o_hat, std::move(attr_scores)};
}

// Per-pair composition scores: softmax over cosine against the composed
// candidates by default, or sigmoid scores from the composition score head.
template <class Real>
TensorPtr<Real> composition_scores(const CscNet<Real>& model, const TensorPtr<Real>& phi,
                                   std::span<const TensorPtr<Real>> candidates, Real temperature) {
  if (candidates.empty()) throw std::runtime_error("forward_composition: catalog is empty");
  auto v_c = mlp_forward(model.e_c, phi);
  return classify<Real>(model.composition_cls, model.scorer_c, v_c, candidates, temperature);
}

template <class Real>
TensorPtr<Real> forward_composition(const CscNet<Real>& model, const TensorPtr<Real>& phi,
                                    const SemanticSpace<Real>& space,
                                    const CompositionCatalog& catalog, Real temperature) {
  auto candidates = candidate_embeddings(space, catalog, model.composer);
  return composition_scores<Real>(model, phi, candidates, temperature);
}

inline constexpr double kScoreClampEps = 1e-7;

// Full binary cross-entropy over independent per-class scores, averaged over
// the class count. positive_only keeps just the -log(score_true) term, which
// is degenerate under independent sigmoids and exists for fidelity runs.
template <class Real>
TensorPtr<Real> branch_loss(const TensorPtr<Real>& scores, std::size_t true_id,
                            bool positive_only = false) {
  if (scores->shape.size() != 1) {
    throw std::runtime_error("branch_loss: expected a score vector, got shape " +
                             shape_to_string(scores->shape));
  }
  const std::size_t k = scores->numel();
  if (true_id >= k) {
    throw std::runtime_error("branch_loss: true class " + std::to_string(true_id) +
                             " out of range for " + std::to_string(k) + " classes");
  }
  const Real eps = static_cast<Real>(kScoreClampEps);
  auto s = clamp(scores, eps, Real(1) - eps);
  auto log_true = log(select(s, true_id));
  if (positive_only) return neg(log_true);
  auto log_not = log(one_minus(s));
  auto negatives = sub(sum(log_not), select(log_not, true_id));
  return scale(neg(add(log_true, negatives)), Real(1) / static_cast<Real>(k));
}

// -log(probs[true_pair]) with the lower clamp; exact perfect predictions give 0.
template <class Real>
TensorPtr<Real> composition_loss(const TensorPtr<Real>& probs, std::size_t true_pair) {
  if (probs->shape.size() != 1) {
    throw std::runtime_error("composition_loss: expected a probability vector, got shape " +
                             shape_to_string(probs->shape));
  }
  if (true_pair >= probs->numel()) {
    throw std::runtime_error("composition_loss: pair index " + std::to_string(true_pair) +
                             " out of range for " + std::to_string(probs->numel()) + " pairs");
  }
  const Real eps = static_cast<Real>(kScoreClampEps);
  return neg(log(clamp(select(probs, true_pair), eps, Real(1))));
}

struct LossOptions {
  double alpha = 4.0;
  bool a2o = true;
  bool o2a = true;
  bool composition = true;
  bool teacher_forcing = false;
  bool positive_only = false;
  double temperature = 0.05;
};

template <class Real>
TensorPtr<Real> primitive_loss(ClassifierKind kind, const TensorPtr<Real>& scores,
                               std::size_t true_id, bool positive_only) {
  // Non-parametric heads emit a distribution, so their loss is the plain
  // negative log-likelihood rather than per-class binary cross-entropy.
  return kind == ClassifierKind::parametric ? branch_loss(scores, true_id, positive_only)
                                            : composition_loss(scores, true_id);
}

template <class Real>
struct SampleLosses {
  TensorPtr<Real> attr;       // L_a
  TensorPtr<Real> obj;        // L_o
  TensorPtr<Real> attr2obj;   // L_a2o
  TensorPtr<Real> obj2attr;   // L_o2a
  TensorPtr<Real> comp;       // L_c
};

template <class Real>
SampleLosses<Real> sample_losses(const CscNet<Real>& model, const Sample<Real>& sample,
                                 const SemanticSpace<Real>& space,
                                 const CompositionCatalog& catalog,
                                 std::span<const TensorPtr<Real>> candidates,
                                 const LossOptions& opts) {
  const Real temp = static_cast<Real>(opts.temperature);
  SampleLosses<Real> out;
  if (opts.a2o) {
    auto branch = forward_a2o<Real>(model, sample.feature, space, temp,
                                    opts.teacher_forcing ? std::optional(sample.attr_id)
                                                         : std::nullopt);
    out.attr = primitive_loss<Real>(model.primitive_cls, branch.primitive_scores, sample.attr_id,
                                    opts.positive_only);
    out.attr2obj = primitive_loss<Real>(model.primitive_cls, branch.conditioned_scores,
                                        sample.obj_id, opts.positive_only);
  }
  if (opts.o2a) {
    auto branch = forward_o2a<Real>(model, sample.feature, space, temp,
                                    opts.teacher_forcing ? std::optional(sample.obj_id)
                                                         : std::nullopt);
    out.obj = primitive_loss<Real>(model.primitive_cls, branch.primitive_scores, sample.obj_id,
                                   opts.positive_only);
    out.obj2attr = primitive_loss<Real>(model.primitive_cls, branch.conditioned_scores,
                                        sample.attr_id, opts.positive_only);
  }
  if (opts.composition) {
    const std::size_t true_pair = catalog.find(sample.attr_id, sample.obj_id);
    auto scores = composition_scores<Real>(model, sample.feature, candidates, temp);
    out.comp = model.composition_cls == ClassifierKind::parametric
                   ? branch_loss(scores, true_pair, opts.positive_only)
                   : composition_loss(scores, true_pair);
  }
  return out;
}

// Mean over the batch of alpha * (L_a + L_o + L_a2o + L_o2a) + L_c, restricted
// to the enabled branches. Training batches must contain only seen pairs.
template <class Real>
TensorPtr<Real> total_loss(const CscNet<Real>& model, std::span<const Sample<Real>> batch,
                           const SemanticSpace<Real>& space, const CompositionCatalog& catalog,
                           const LossOptions& opts) {
  if (batch.empty()) throw std::runtime_error("total_loss: batch is empty");
  if (!(opts.alpha >= 0.0)) throw std::runtime_error("total_loss: alpha must be >= 0");
  if (!opts.a2o && !opts.o2a && !opts.composition) {
    throw std::runtime_error("total_loss: at least one branch must be enabled");
  }

  for (const auto& sample : batch) {
    const std::size_t k = catalog.find(sample.attr_id, sample.obj_id);
    if (k == CompositionCatalog::npos) {
      throw std::runtime_error("total_loss: pair (" + std::to_string(sample.attr_id) + "," +
                               std::to_string(sample.obj_id) + ") is not in the catalog");
    }
    if (!catalog.seen[k]) {
      throw std::runtime_error("total_loss: training batch contains unseen pair (" +
                               space.attr_names[sample.attr_id] + "," +
                               space.obj_names[sample.obj_id] + ")");
    }
  }

  // Candidates are recomposed once per step and shared across the batch.
  std::vector<TensorPtr<Real>> candidates;
  if (opts.composition) candidates = candidate_embeddings(space, catalog, model.composer);

  std::vector<TensorPtr<Real>> per_sample;
  per_sample.reserve(batch.size());
  for (const auto& sample : batch) {
    auto losses = sample_losses<Real>(model, sample, space, catalog, candidates, opts);
    TensorPtr<Real> primitives;
    for (const auto& term : {losses.attr, losses.obj, losses.attr2obj, losses.obj2attr}) {
      if (!term) continue;
      primitives = primitives ? add(primitives, term) : term;
    }
    TensorPtr<Real> total;
    if (primitives) total = scale(primitives, static_cast<Real>(opts.alpha));
    if (losses.comp) total = total ? add(total, losses.comp) : losses.comp;
    per_sample.push_back(std::move(total));
  }
  return mean_of(per_sample);
}

struct InferenceOptions {
  double beta = 0.1;
  double temperature = 0.05;
  bool a2o = true;
  bool o2a = true;
  bool composition = true;
};

// Fused per-pair score: beta * (P(a|x) P(o|a_hat,x) + P(o|x) P(a|o_hat,x))
// + (1 - beta) * P(c|x), one cascade pass per direction, no recording.
template <class Real>
std::vector<double> inference_score(const CscNet<Real>& model, const TensorPtr<Real>& phi,
                                    const SemanticSpace<Real>& space,
                                    const CompositionCatalog& catalog,
                                    const InferenceOptions& opts,
                                    std::span<const TensorPtr<Real>> precomposed_candidates = {}) {
  if (!(opts.beta >= 0.0 && opts.beta <= 1.0)) {
    throw std::runtime_error("inference_score: beta must lie in [0,1]");
  }
  if (!opts.composition && opts.beta != 1.0) {
    throw std::runtime_error("inference_score: with the composition branch disabled beta must be 1");
  }
  NoGradGuard no_grad;
  const Real temp = static_cast<Real>(opts.temperature);

  std::vector<Real> attr_p, obj_given_a, obj_p, attr_given_o, comp;
  if (opts.a2o) {
    auto branch = forward_a2o<Real>(model, phi, space, temp);
    attr_p = branch.primitive_scores->values;
    obj_given_a = branch.conditioned_scores->values;
  }
  if (opts.o2a) {
    auto branch = forward_o2a<Real>(model, phi, space, temp);
    obj_p = branch.primitive_scores->values;
    attr_given_o = branch.conditioned_scores->values;
  }
  if (opts.composition) {
    if (!precomposed_candidates.empty()) {
      comp = composition_scores<Real>(model, phi, precomposed_candidates, temp)->values;
    } else {
      comp = forward_composition<Real>(model, phi, space, catalog, temp)->values;
    }
  }

  std::vector<double> out(catalog.size(), 0.0);
  for (std::size_t k = 0; k < catalog.size(); ++k) {
    const auto [a, o] = catalog.pairs[k];
    double cascade = 0.0;
    if (opts.a2o) cascade += static_cast<double>(attr_p[a]) * static_cast<double>(obj_given_a[o]);
    if (opts.o2a) cascade += static_cast<double>(obj_p[o]) * static_cast<double>(attr_given_o[a]);
    double score = opts.beta * cascade;
    if (opts.composition) score += (1.0 - opts.beta) * static_cast<double>(comp[k]);
    out[k] = score;
  }
  return out;
}

}  // namespace cscnet
