#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cscnet/eval.hpp"
#include "naive_eval.hpp"

using namespace cscnet;
using Catch::Approx;

namespace {

ScoreMatrix make_matrix(const std::vector<std::vector<double>>& rows,
                        const std::vector<std::size_t>& truths,
                        const std::vector<std::uint8_t>& unseen) {
  ScoreMatrix sm;
  sm.n_samples = rows.size();
  sm.n_pairs = rows[0].size();
  for (const auto& row : rows) sm.scores.insert(sm.scores.end(), row.begin(), row.end());
  sm.truths = truths;
  sm.unseen = unseen;
  return sm;
}

void check_against_oracle(const ScoreMatrix& sm, std::size_t n_biases) {
  const auto report = evaluate(sm, n_biases);
  std::vector<std::vector<double>> rows(sm.n_samples);
  for (std::size_t i = 0; i < sm.n_samples; ++i) {
    rows[i].assign(sm.scores.begin() + static_cast<std::ptrdiff_t>(i * sm.n_pairs),
                   sm.scores.begin() + static_cast<std::ptrdiff_t>((i + 1) * sm.n_pairs));
  }
  std::vector<bool> unseen(sm.unseen.begin(), sm.unseen.end());
  const auto oracle = naive_eval::run(rows, sm.truths, unseen, n_biases);
  CHECK(std::abs(report.seen - oracle.seen) <= 1e-12);
  CHECK(std::abs(report.unseen - oracle.unseen) <= 1e-12);
  CHECK(std::abs(report.hm - oracle.hm) <= 1e-12);
  CHECK(std::abs(report.auc - oracle.auc) <= 1e-12);
  REQUIRE(report.curve.size() == oracle.biases.size());
  for (std::size_t i = 0; i < report.curve.size(); ++i) {
    CHECK(report.curve[i].bias == oracle.biases[i]);
    CHECK(report.curve[i].seen_acc == oracle.seen_accs[i]);
    CHECK(report.curve[i].unseen_acc == oracle.unseen_accs[i]);
  }
}

}  // namespace

TEST_CASE("accuracy_at_bias on a hand-traced 3-sample matrix") {
  // Pairs: 0 seen, 1 unseen. Truths: samples 0,1 -> pair 0; sample 2 -> pair 1.
  auto sm = make_matrix({{0.9, 0.5}, {0.4, 0.6}, {0.2, 0.3}}, {0, 0, 1}, {0, 1});

  SECTION("bias 0 is the plain argmax") {
    const auto [seen_acc, unseen_acc] = accuracy_at_bias(sm, 0.0);
    // sample 0 -> pair 0 (hit), sample 1 -> pair 1 (miss), sample 2 -> pair 1 (hit)
    CHECK(seen_acc == Approx(0.5));
    CHECK(unseen_acc == Approx(1.0));
  }
  SECTION("bias 0.6 pushes sample 0 to the unseen pair") {
    const auto [seen_acc, unseen_acc] = accuracy_at_bias(sm, 0.6);
    // 0.5 + 0.6 = 1.1 > 0.9: every sample predicts pair 1
    CHECK(seen_acc == Approx(0.0));
    CHECK(unseen_acc == Approx(1.0));
  }
  SECTION("a saturating positive bias zeroes the seen accuracy") {
    const auto [seen_acc, unseen_acc] = accuracy_at_bias(sm, 10.0 * (0.9 - 0.2));
    CHECK(seen_acc == Approx(0.0));
    CHECK(unseen_acc == Approx(1.0));
  }
  SECTION("a saturating negative bias zeroes the unseen accuracy") {
    const auto [seen_acc, unseen_acc] = accuracy_at_bias(sm, -10.0);
    CHECK(seen_acc == Approx(1.0));
    CHECK(unseen_acc == Approx(0.0));
  }
}

TEST_CASE("accuracy_at_bias requires both test groups") {
  auto sm = make_matrix({{0.9, 0.5}}, {0}, {0, 1});  // only the seen group
  CHECK_THROWS_AS(accuracy_at_bias(sm, 0.0), std::runtime_error);
}

TEST_CASE("a perfect scorer reaches 1.0 on every metric") {
  // Margins larger than the whole grid span keep every argmax in place.
  auto sm = make_matrix({{100.0, 0.1, 0.2}, {0.0, 100.2, 0.1}, {0.1, 0.0, 100.1}}, {0, 1, 2},
                        {0, 0, 1});
  const auto report = evaluate(sm, 11);
  CHECK(report.seen == Approx(1.0));
  CHECK(report.unseen == Approx(1.0));
  CHECK(report.hm == Approx(1.0));
  CHECK(report.auc == Approx(1.0));
}

TEST_CASE("a constant scorer resolves ties to pair 0 and matches hand enumeration") {
  auto sm = make_matrix({{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}, {0, 1, 2}, {0, 0, 1});
  // delta = 0: grid biases are 0 with endpoints -1 and +1.
  // bias < 0: argmax pair 0 -> seen hits sample 0 only; unseen 0.
  // bias = 0: same (ties to lowest index, pair 0).
  // bias > 0: argmax pair 2 -> unseen hits sample 2; seen 0.
  const auto report = evaluate(sm, 5);
  CHECK(report.seen == Approx(0.5));
  CHECK(report.unseen == Approx(1.0));
  CHECK(report.hm == Approx(0.0));
  CHECK(report.auc == Approx(0.25));
  check_against_oracle(sm, 5);
}

TEST_CASE("evaluate matches the brute-force oracle on a hand fixture") {
  auto sm = make_matrix(
      {
          {0.10, 0.30, 0.25, 0.05},
          {0.40, 0.35, 0.10, 0.20},
          {0.15, 0.25, 0.50, 0.45},
          {0.30, 0.10, 0.20, 0.60},
          {0.22, 0.21, 0.20, 0.19},
      },
      {0, 1, 2, 3, 0}, {0, 0, 1, 1});
  check_against_oracle(sm, 50);
}

TEST_CASE("evaluate matches the brute-force oracle on random small matrices") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n_samples = 2 + rng() % 7;  // up to 8
    const std::size_t n_pairs = 2 + rng() % 5;    // up to 6
    std::vector<std::vector<double>> rows(n_samples, std::vector<double>(n_pairs));
    for (auto& row : rows) {
      for (double& v : row) v = unif(rng);
    }
    std::vector<std::uint8_t> unseen(n_pairs, 0);
    unseen[rng() % n_pairs] = 1;
    std::vector<std::size_t> truths(n_samples);
    bool has_seen = false, has_unseen = false;
    for (auto& t : truths) {
      t = rng() % n_pairs;
      (unseen[t] ? has_unseen : has_seen) = true;
    }
    if (!has_seen) {
      for (std::size_t k = 0; k < n_pairs; ++k) {
        if (!unseen[k]) {
          truths[0] = k;
          break;
        }
      }
    }
    if (!has_unseen) {
      for (std::size_t k = 0; k < n_pairs; ++k) {
        if (unseen[k]) {
          truths[n_samples - 1] = k;
          break;
        }
      }
    }
    check_against_oracle(make_matrix(rows, truths, unseen), 10 + rng() % 40);
  }
}

TEST_CASE("the curve is monotone and the report shift-invariant") {
  std::mt19937_64 rng(78);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> rows(6, std::vector<double>(5));
  for (auto& row : rows) {
    for (double& v : row) v = unif(rng);
  }
  std::vector<std::uint8_t> unseen = {0, 1, 0, 1, 0};
  std::vector<std::size_t> truths = {0, 1, 2, 3, 4, 0};
  auto sm = make_matrix(rows, truths, unseen);
  const auto report = evaluate(sm, 50);

  for (std::size_t i = 1; i < report.curve.size(); ++i) {
    CHECK(report.curve[i].seen_acc <= report.curve[i - 1].seen_acc);
    CHECK(report.curve[i].unseen_acc >= report.curve[i - 1].unseen_acc);
  }

  ScoreMatrix shifted = sm;
  for (double& v : shifted.scores) v += 17.25;
  const auto report2 = evaluate(shifted, 50);
  CHECK(report2.seen == report.seen);
  CHECK(report2.unseen == report.unseen);
  CHECK(report2.hm == report.hm);
  CHECK(report2.auc == report.auc);
  REQUIRE(report2.curve.size() == report.curve.size());
  for (std::size_t i = 0; i < report.curve.size(); ++i) {
    CHECK(report2.curve[i].seen_acc == report.curve[i].seen_acc);
    CHECK(report2.curve[i].unseen_acc == report.curve[i].unseen_acc);
  }
}

TEST_CASE("permuting sample order leaves the report unchanged") {
  std::mt19937_64 rng(79);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> rows(7, std::vector<double>(4));
  for (auto& row : rows) {
    for (double& v : row) v = unif(rng);
  }
  std::vector<std::uint8_t> unseen = {0, 0, 1, 1};
  std::vector<std::size_t> truths = {0, 1, 2, 3, 0, 1, 2};
  const auto report = evaluate(make_matrix(rows, truths, unseen), 20);

  std::vector<std::size_t> perm = {3, 0, 6, 2, 5, 1, 4};
  std::vector<std::vector<double>> prows;
  std::vector<std::size_t> ptruths;
  for (std::size_t i : perm) {
    prows.push_back(rows[i]);
    ptruths.push_back(truths[i]);
  }
  const auto permuted = evaluate(make_matrix(prows, ptruths, unseen), 20);
  CHECK(permuted.seen == report.seen);
  CHECK(permuted.unseen == report.unseen);
  CHECK(permuted.hm == report.hm);
  CHECK(permuted.auc == report.auc);
}

TEST_CASE("evaluate validates its inputs") {
  auto sm = make_matrix({{0.5, 0.4}}, {0}, {0, 1});
  CHECK_THROWS_AS(evaluate(sm, 1), std::runtime_error);  // n_biases too small
  ScoreMatrix bad = sm;
  bad.scores[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(evaluate(bad, 10), std::runtime_error);
  ScoreMatrix misaligned = sm;
  misaligned.unseen = {0};
  CHECK_THROWS_AS(evaluate(misaligned, 10), std::runtime_error);
}
