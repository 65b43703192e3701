#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cscnet/grad_check.hpp"
#include "cscnet/model.hpp"

using namespace cscnet;
using Catch::Approx;

namespace {

SemanticSpace<double> tiny_space(std::size_t n, std::size_t m, std::size_t d, std::uint64_t seed) {
  return generate_synthetic_embeddings<double>(n, m, d, seed);
}

CompositionCatalog full_catalog(std::size_t n, std::size_t m, std::size_t n_unseen = 1) {
  CompositionCatalog catalog;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t o = 0; o < m; ++o) {
      catalog.pairs.emplace_back(a, o);
      catalog.seen.push_back(1);
    }
  }
  for (std::size_t k = 0; k < n_unseen; ++k) catalog.seen[catalog.seen.size() - 1 - k] = 0;
  return catalog;
}

std::vector<Sample<double>> random_batch(std::size_t count, std::size_t d_x,
                                         const CompositionCatalog& catalog, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<Sample<double>> batch;
  std::vector<std::size_t> seen_pairs;
  for (std::size_t k = 0; k < catalog.size(); ++k) {
    if (catalog.seen[k]) seen_pairs.push_back(k);
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> f(d_x);
    for (double& v : f) v = gauss(rng);
    const auto pair = catalog.pairs[seen_pairs[i % seen_pairs.size()]];
    batch.push_back({constant<double>({d_x}, std::move(f)), pair.first, pair.second});
  }
  return batch;
}

Mlp<double> identity_extractor(std::size_t d) {
  auto net = Mlp<double>::zeros(d, d, d);
  for (std::size_t i = 0; i < d; ++i) {
    net.w1->values[i * d + i] = 1.0;
    net.w2->values[i * d + i] = 1.0;
  }
  return net;
}

double entropy(const std::vector<double>& p) {
  double h = 0;
  for (double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace

TEST_CASE("param_cls with zero weights scores 0.5 everywhere") {
  auto scorer = Mlp<double>::zeros(6, 4, 1);
  auto v = constant<double>({4}, {1.0, -2.0, 0.3, 0.9});
  std::vector<TensorPtr<double>> rows = {constant<double>({2}, {1.0, 0.0}),
                                         constant<double>({2}, {0.0, 1.0}),
                                         constant<double>({2}, {0.5, 0.5})};
  auto scores = param_cls<double>(scorer, v, rows);
  REQUIRE(scores->numel() == 3);
  for (double s : scores->values) CHECK(s == Approx(0.5).margin(1e-12));
}

TEST_CASE("param_cls with one class equals the sigmoid of the scalar head") {
  std::mt19937_64 rng(31);
  auto scorer = Mlp<double>::init(5, 4, 1, rng);
  auto v = constant<double>({3}, {0.2, -0.4, 1.1});
  auto row = constant<double>({2}, {0.7, -0.1});
  auto scores = param_cls<double>(scorer, v, std::vector<TensorPtr<double>>{row});
  auto z = mlp_forward(scorer, concat(v, row));
  const double expected = 1.0 / (1.0 + std::exp(-z->values[0]));
  REQUIRE(scores->numel() == 1);
  CHECK(scores->values[0] == Approx(expected).margin(1e-12));
}

TEST_CASE("param_cls matches a per-row forward oracle") {
  std::mt19937_64 rng(32);
  const std::size_t d_v = 4, d = 4, hidden = 5, k = 3;
  auto scorer = Mlp<double>::init(d_v + d, hidden, 1, rng);
  auto v = constant<double>({d_v}, {0.3, -0.6, 0.1, 0.8});
  std::vector<TensorPtr<double>> rows;
  std::normal_distribution<double> gauss;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> r(d);
    for (double& x : r) x = gauss(rng);
    rows.push_back(constant<double>({d}, std::move(r)));
  }
  auto scores = param_cls<double>(scorer, v, rows);

  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> in(v->values);
    in.insert(in.end(), rows[i]->values.begin(), rows[i]->values.end());
    std::vector<double> h(hidden);
    for (std::size_t r = 0; r < hidden; ++r) {
      double s = scorer.b1->values[r];
      for (std::size_t c = 0; c < d_v + d; ++c) s += scorer.w1->values[r * (d_v + d) + c] * in[c];
      h[r] = std::max(0.0, s);
    }
    double z = scorer.b2->values[0];
    for (std::size_t c = 0; c < hidden; ++c) z += scorer.w2->values[c] * h[c];
    CHECK(scores->values[i] == Approx(1.0 / (1.0 + std::exp(-z))).margin(1e-12));
  }
}

TEST_CASE("param_cls outputs lie strictly inside (0,1)") {
  std::mt19937_64 rng(33);
  auto scorer = Mlp<double>::init(4, 8, 1, rng);
  auto v = constant<double>({2}, {5.0, -7.0});
  std::vector<TensorPtr<double>> rows = {constant<double>({2}, {10.0, 10.0}),
                                         constant<double>({2}, {-10.0, -10.0})};
  auto scores = param_cls<double>(scorer, v, rows);
  for (double s : scores->values) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  CHECK_THROWS_AS(param_cls<double>(scorer, v, std::vector<TensorPtr<double>>{}),
                  std::runtime_error);
}

TEST_CASE("non_param_cls hand values") {
  SECTION("identical candidates give a uniform distribution") {
    auto v = constant<double>({2}, {0.6, 0.8});
    std::vector<TensorPtr<double>> rows = {v, v, v, v};
    auto p = non_param_cls<double>(v, rows, 1.0);
    for (double x : p->values) CHECK(x == Approx(0.25).margin(1e-12));
  }
  SECTION("cosines (1,-1) at temperature 1") {
    auto v = constant<double>({2}, {1.0, 0.0});
    std::vector<TensorPtr<double>> rows = {constant<double>({2}, {1.0, 0.0}),
                                           constant<double>({2}, {-1.0, 0.0})};
    auto p = non_param_cls<double>(v, rows, 1.0);
    CHECK(p->values[0] == Approx(0.8808).margin(1e-4));
    CHECK(p->values[1] == Approx(0.1192).margin(1e-4));
  }
  SECTION("one candidate gives probability one") {
    auto v = constant<double>({2}, {1.0, 0.0});
    std::vector<TensorPtr<double>> rows = {constant<double>({2}, {0.0, 1.0})};
    auto p = non_param_cls<double>(v, rows, 0.05);
    CHECK(p->values[0] == Approx(1.0).margin(1e-12));
  }
  SECTION("non-finite input is rejected") {
    auto v = constant<double>({2}, {std::numeric_limits<double>::quiet_NaN(), 0.0});
    std::vector<TensorPtr<double>> rows = {constant<double>({2}, {1.0, 0.0})};
    CHECK_THROWS_AS(non_param_cls<double>(v, rows, 1.0), std::runtime_error);
  }
}

TEST_CASE("forward_a2o with zero scorers ties to class 0") {
  auto space = tiny_space(3, 4, 4, 41);
  ModelDims dims{4, 4, 4, 4, 4};
  auto model = CscNet<double>::init(dims, ClassifierKind::parametric,
                                    ClassifierKind::nonparametric, 3);
  for (auto* scorer : {&model.scorer_a, &model.scorer_a2o}) {
    for (auto& p : scorer->params()) std::fill(p->values.begin(), p->values.end(), 0.0);
  }
  auto phi = constant<double>({4}, {0.5, -0.5, 0.2, 0.1});
  auto out = forward_a2o<double>(model, phi, space, 0.05);
  CHECK(out.predicted_id == 0);
  for (double s : out.primitive_scores->values) CHECK(s == Approx(0.5).margin(1e-12));
  for (double s : out.conditioned_scores->values) CHECK(s == Approx(0.5).margin(1e-12));
}

TEST_CASE("forward_a2o with one attribute always conditions on it") {
  // A degenerate one-attribute space, built directly.
  auto base = tiny_space(2, 3, 4, 42);
  SemanticSpace<double> space;
  space.dim = 4;
  space.attr_names = {base.attr_names[0]};
  space.attr_rows = {base.attr_rows[0]};
  space.obj_names = base.obj_names;
  space.obj_rows = base.obj_rows;

  ModelDims dims{4, 4, 4, 4, 4};
  auto model = CscNet<double>::init(dims, ClassifierKind::parametric,
                                    ClassifierKind::nonparametric, 5);
  auto phi1 = constant<double>({4}, {0.5, -0.5, 0.2, 0.1});
  auto phi2 = constant<double>({4}, {-1.0, 0.3, 0.8, -0.4});
  auto out1 = forward_a2o<double>(model, phi1, space, 0.05);
  auto out2 = forward_a2o<double>(model, phi2, space, 0.05);
  CHECK(out1.predicted_id == 0);
  CHECK(out2.predicted_id == 0);
  CHECK(out1.conditioned_scores->values != out2.conditioned_scores->values);
}

TEST_CASE("a2o conditioning consumes exactly the predicted attribute row") {
  // Nonparametric heads with an identity extractor make the prediction
  // controllable: phi equal to attribute row 2 predicts class 2.
  const std::size_t d = 4;
  auto space = tiny_space(4, 3, d, 43);
  ModelDims dims{d, d, d, d, d};
  auto model = CscNet<double>::init(dims, ClassifierKind::nonparametric,
                                    ClassifierKind::nonparametric, 7);
  model.e_a = identity_extractor(d);

  auto phi = constant<double>({d}, space.attr_rows[2]->values);
  auto base = forward_a2o<double>(model, phi, space, 0.05);
  REQUIRE(base.predicted_id == 2);

  auto perturb = [&](std::size_t row, double delta) {
    space.attr_rows[row]->values[0] += delta;
    auto out = forward_a2o<double>(model, phi, space, 0.05);
    space.attr_rows[row]->values[0] -= delta;
    return out;
  };

  auto poked2 = perturb(2, 0.05);
  REQUIRE(poked2.predicted_id == 2);  // still dominant
  CHECK(poked2.conditioned_scores->values != base.conditioned_scores->values);

  auto poked1 = perturb(1, 0.05);
  REQUIRE(poked1.predicted_id == 2);
  CHECK(poked1.conditioned_scores->values == base.conditioned_scores->values);
}

TEST_CASE("forward_o2a mirrors the cascade with roles swapped") {
  auto space = tiny_space(3, 4, 4, 44);
  ModelDims dims{4, 4, 4, 4, 4};
  auto model = CscNet<double>::init(dims, ClassifierKind::parametric,
                                    ClassifierKind::nonparametric, 9);
  for (auto* scorer : {&model.scorer_o, &model.scorer_o2a}) {
    for (auto& p : scorer->params()) std::fill(p->values.begin(), p->values.end(), 0.0);
  }
  auto phi = constant<double>({4}, {0.5, -0.5, 0.2, 0.1});
  auto out = forward_o2a<double>(model, phi, space, 0.05);
  CHECK(out.predicted_id == 0);
  CHECK(out.primitive_scores->numel() == 4);   // objects first
  CHECK(out.conditioned_scores->numel() == 3); // then attributes

  // One-object space: the prediction is forced to 0.
  SemanticSpace<double> one;
  one.dim = 4;
  one.attr_names = space.attr_names;
  one.attr_rows = space.attr_rows;
  one.obj_names = {space.obj_names[0]};
  one.obj_rows = {space.obj_rows[0]};
  auto model2 = CscNet<double>::init(dims, ClassifierKind::parametric,
                                     ClassifierKind::nonparametric, 10);
  auto out2 = forward_o2a<double>(model2, phi, one, 0.05);
  CHECK(out2.predicted_id == 0);
}

TEST_CASE("forward_composition yields a distribution and flattens with temperature") {
  auto space = tiny_space(3, 3, 6, 45);
  ModelDims dims{6, 6, 6, 6, 6};
  auto model = CscNet<double>::init(dims, ClassifierKind::parametric,
                                    ClassifierKind::nonparametric, 11);
  auto catalog = full_catalog(3, 3);
  auto phi = constant<double>({6}, {0.4, -0.2, 0.9, 0.0, -0.7, 0.3});

  auto probs = forward_composition<double>(model, phi, space, catalog, 0.05);
  double s = 0;
  for (double v : probs->values) s += v;
  CHECK(s == Approx(1.0).margin(1e-10));

  auto flat = forward_composition<double>(model, phi, space, catalog, 0.10);
  CHECK(entropy(flat->values) > entropy(probs->values));

  CompositionCatalog one;
  one.pairs = {{0, 0}};
  one.seen = {1};
  auto single = forward_composition<double>(model, phi, space, one, 0.05);
  CHECK(single->values[0] == Approx(1.0).margin(1e-12));
}

TEST_CASE("branch_loss hand values") {
  CHECK(branch_loss(constant<double>({1}, {0.5}), 0)->item() == Approx(std::log(2.0)).margin(1e-6));
  const double eps = 1e-7;
  auto perfect = branch_loss(constant<double>({3}, {1.0 - eps, eps, eps}), 0);
  CHECK(perfect->item() == Approx(0.0).margin(1e-6));
  auto half = branch_loss(constant<double>({2}, {0.5, 0.5}), 0);
  CHECK(half->item() == Approx(std::log(2.0)).margin(1e-9));
  CHECK_THROWS_AS(branch_loss(constant<double>({2}, {0.5, 0.5}), 5), std::runtime_error);
  // Saturated scores clamp instead of producing non-finite losses.
  auto clamped = branch_loss(constant<double>({2}, {1.0, 0.0}), 0);
  CHECK(std::isfinite(clamped->item()));
}

TEST_CASE("branch_loss positive-only keeps just the positive term") {
  auto loss = branch_loss(constant<double>({3}, {0.5, 0.9, 0.9}), 0, /*positive_only=*/true);
  CHECK(loss->item() == Approx(std::log(2.0)).margin(1e-9));
}

TEST_CASE("composition_loss hand values") {
  auto uniform = composition_loss(constant<double>({4}, {0.25, 0.25, 0.25, 0.25}), 2);
  CHECK(uniform->item() == Approx(std::log(4.0)).margin(1e-9));
  auto perfect = composition_loss(constant<double>({2}, {0.0, 1.0}), 1);
  CHECK(perfect->item() == 0.0);
  const double p = std::exp(-2.0);
  auto two = composition_loss(constant<double>({2}, {1.0 - p, p}), 1);
  CHECK(two->item() == Approx(2.0).margin(1e-9));
  CHECK_THROWS_AS(composition_loss(constant<double>({2}, {0.5, 0.5}), 2), std::runtime_error);
}

TEST_CASE("total_loss endpoint and linearity identities") {
  auto space = tiny_space(3, 3, 4, 46);
  ModelDims dims{5, 4, 4, 4, 4};
  auto model = CscNet<double>::init(dims, ClassifierKind::parametric,
                                    ClassifierKind::nonparametric, 13);
  auto catalog = full_catalog(3, 3);
  auto batch = random_batch(3, 5, catalog, 47);

  LossOptions opts;
  opts.temperature = 0.05;

  SECTION("alpha = 0 equals the mean composition loss exactly") {
    opts.alpha = 0.0;
    auto total = total_loss<double>(model, batch, space, catalog, opts);
    auto candidates = candidate_embeddings(space, catalog, model.composer);
    std::vector<TensorPtr<double>> comps;
    for (const auto& s : batch) {
      comps.push_back(sample_losses<double>(model, s, space, catalog, candidates, opts).comp);
    }
    CHECK(std::abs(total->item() - mean_of(comps)->item()) <= 1e-12);
  }

  SECTION("alpha = 4 recomposes from the five separate losses") {
    opts.alpha = 4.0;
    auto total = total_loss<double>(model, batch, space, catalog, opts);
    auto candidates = candidate_embeddings(space, catalog, model.composer);
    double recomposed = 0;
    for (const auto& s : batch) {
      auto l = sample_losses<double>(model, s, space, catalog, candidates, opts);
      recomposed += 4.0 * (l.attr->item() + l.obj->item() + l.attr2obj->item() + l.obj2attr->item()) +
                    l.comp->item();
    }
    recomposed /= static_cast<double>(batch.size());
    CHECK(total->item() == Approx(recomposed).margin(1e-9));
  }

  SECTION("duplicated sample leaves the mean unchanged") {
    opts.alpha = 4.0;
    std::vector<Sample<double>> one = {batch[0]};
    std::vector<Sample<double>> two = {batch[0], batch[0]};
    auto l1 = total_loss<double>(model, one, space, catalog, opts);
    auto l2 = total_loss<double>(model, two, space, catalog, opts);
    CHECK(l1->item() == Approx(l2->item()).margin(1e-12));
  }

  SECTION("linear in alpha") {
    auto at = [&](double alpha) {
      LossOptions o = opts;
      o.alpha = alpha;
      return total_loss<double>(model, batch, space, catalog, o)->item();
    };
    const double l0 = at(0.0), l1 = at(1.0), l4 = at(4.0);
    CHECK(std::abs(l4 - (l0 + 4.0 * (l1 - l0))) <= 1e-9);
  }

  SECTION("unseen training pair is rejected") {
    std::vector<Sample<double>> bad = {batch[0]};
    std::size_t unseen_idx = 0;
    for (std::size_t k = 0; k < catalog.size(); ++k) {
      if (!catalog.seen[k]) unseen_idx = k;
    }
    bad[0].attr_id = catalog.pairs[unseen_idx].first;
    bad[0].obj_id = catalog.pairs[unseen_idx].second;
    try {
      total_loss<double>(model, bad, space, catalog, opts);
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("unseen") != std::string::npos);
    }
  }

  SECTION("empty batch is rejected") {
    std::vector<Sample<double>> none;
    CHECK_THROWS_AS(total_loss<double>(model, none, space, catalog, opts), std::runtime_error);
  }
}

TEST_CASE("teacher forcing conditions on the ground-truth class") {
  auto space = tiny_space(3, 3, 4, 48);
  ModelDims dims{4, 4, 4, 4, 8};
  auto model = CscNet<double>::init(dims, ClassifierKind::parametric,
                                    ClassifierKind::nonparametric, 15);
  auto phi = constant<double>({4}, {0.3, 0.3, -0.3, 0.5});
  auto free = forward_a2o<double>(model, phi, space, 0.05);
  const std::size_t forced = (free.predicted_id + 1) % 3;
  auto guided = forward_a2o<double>(model, phi, space, 0.05, forced);
  CHECK(guided.predicted_id == forced);
  // The conditioned stage consumes exactly the forced row.
  auto direct = param_cls<double>(model.scorer_a2o,
                                  mlp_forward(model.e_a2o, concat(phi, space.attr_rows[forced])),
                                  space.obj_rows);
  CHECK(guided.conditioned_scores->values == direct->values);
  CHECK(guided.conditioned_scores->values != free.conditioned_scores->values);
}

TEST_CASE("inference_score endpoints, blending, and validation") {
  auto space = tiny_space(2, 2, 4, 49);
  ModelDims dims{4, 4, 4, 4, 4};
  auto model = CscNet<double>::init(dims, ClassifierKind::parametric,
                                    ClassifierKind::nonparametric, 17);
  auto catalog = full_catalog(2, 2);
  auto phi = constant<double>({4}, {0.2, -0.6, 0.4, 0.9});

  InferenceOptions opts;
  opts.temperature = 0.05;

  opts.beta = 0.0;
  const auto comp_only = inference_score<double>(model, phi, space, catalog, opts);
  const auto probs = forward_composition<double>(model, phi, space, catalog, 0.05);
  for (std::size_t k = 0; k < catalog.size(); ++k) {
    CHECK(comp_only[k] == probs->values[k]);
  }

  opts.beta = 1.0;
  const auto cascade_only = inference_score<double>(model, phi, space, catalog, opts);
  {
    // Hand-computed cascade products for every pair.
    auto a2o = forward_a2o<double>(model, phi, space, 0.05);
    auto o2a = forward_o2a<double>(model, phi, space, 0.05);
    for (std::size_t k = 0; k < catalog.size(); ++k) {
      const auto [a, o] = catalog.pairs[k];
      const double expected = a2o.primitive_scores->values[a] * a2o.conditioned_scores->values[o] +
                              o2a.primitive_scores->values[o] * o2a.conditioned_scores->values[a];
      CHECK(cascade_only[k] == Approx(expected).margin(1e-12));
    }
  }

  opts.beta = 0.5;
  const auto mixed = inference_score<double>(model, phi, space, catalog, opts);
  for (std::size_t k = 0; k < catalog.size(); ++k) {
    CHECK(mixed[k] == Approx(0.5 * cascade_only[k] + 0.5 * comp_only[k]).margin(1e-12));
  }

  opts.beta = 0.3;
  const auto blended = inference_score<double>(model, phi, space, catalog, opts);
  for (std::size_t k = 0; k < catalog.size(); ++k) {
    CHECK(std::abs(blended[k] - (0.7 * comp_only[k] + 0.3 * cascade_only[k])) <= 1e-9);
  }

  opts.beta = 1.5;
  CHECK_THROWS_AS(inference_score<double>(model, phi, space, catalog, opts), std::runtime_error);
  opts.beta = 0.5;
  opts.composition = false;
  CHECK_THROWS_AS(inference_score<double>(model, phi, space, catalog, opts), std::runtime_error);
}

TEST_CASE("predicted class is invariant under monotone score transforms") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng() % 6;
    std::vector<double> scores(k);
    for (double& v : scores) v = gauss(rng);
    if (trial % 5 == 0) scores[0] = scores[k - 1];  // exercise ties occasionally
    const std::size_t base = argmax(std::span<const double>(scores));
    std::vector<double> expd(k), affine(k), cubed(k);
    for (std::size_t i = 0; i < k; ++i) {
      expd[i] = std::exp(scores[i]);
      affine[i] = 3.0 * scores[i] + 1.0;
      cubed[i] = scores[i] * scores[i] * scores[i];
    }
    CHECK(argmax(std::span<const double>(expd)) == base);
    CHECK(argmax(std::span<const double>(affine)) == base);
    CHECK(argmax(std::span<const double>(cubed)) == base);
  }
}

TEST_CASE("gradients of the joint loss survive a finite-difference check") {
  auto space = tiny_space(3, 3, 4, 52);
  ModelDims dims{6, 4, 4, 4, 8};
  auto model = CscNet<double>::init(dims, ClassifierKind::parametric,
                                    ClassifierKind::nonparametric, 19);
  auto catalog = full_catalog(3, 3);
  auto batch = random_batch(2, 6, catalog, 53);
  const auto params = model.named_parameters();

  LossOptions opts;
  opts.temperature = 0.05;

  SECTION("composition loss alone") {
    opts.alpha = 0.0;
    auto f = [&] { return total_loss<double>(model, batch, space, catalog, opts); };
    const auto report = grad_check<double>(f, params, 1e-5, 1e-4);
    INFO("worst " << report.worst_param << " rel=" << report.max_rel_err);
    CHECK(report.pass);
  }
  SECTION("joint loss at alpha = 4") {
    opts.alpha = 4.0;
    auto f = [&] { return total_loss<double>(model, batch, space, catalog, opts); };
    const auto report = grad_check<double>(f, params, 1e-5, 1e-4);
    INFO("worst " << report.worst_param << " rel=" << report.max_rel_err);
    CHECK(report.pass);
  }
}
