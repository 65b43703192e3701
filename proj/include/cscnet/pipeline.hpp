#pragma once

// Training loop and test-set scoring: the glue between the model, the data,
// and the evaluation protocol.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cscnet/adam.hpp"
#include "cscnet/data.hpp"
#include "cscnet/eval.hpp"
#include "cscnet/model.hpp"

namespace cscnet {

struct TrainOptions {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double lr = 5e-5;
  std::uint64_t seed = 1;
  LossOptions loss;
};

struct TrainResult {
  std::vector<double> epoch_mean_loss;
};

// Adam on the joint loss; per-epoch mean losses stream to `log` as
// "epoch <i> loss <value>" lines. Non-finite losses abort with the epoch and
// batch coordinates.
template <class Real>
TrainResult train_model(CscNet<Real>& model, const DatasetSplit<Real>& split,
                        const SemanticSpace<Real>& space, const TrainOptions& opts,
                        std::ostream* log = nullptr) {
  AdamHyperparams hp;
  hp.lr = opts.lr;
  Adam<Real> adam(model.parameters(), hp);
  TrainResult result;
  result.epoch_mean_loss.reserve(opts.epochs);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    double weighted_sum = 0.0;
    std::size_t sample_count = 0;
    const auto epoch_batches = batches(split, opts.batch_size, opts.seed, epoch);
    for (std::size_t bi = 0; bi < epoch_batches.size(); ++bi) {
      std::vector<Sample<Real>> batch;
      batch.reserve(epoch_batches[bi].size());
      for (std::size_t idx : epoch_batches[bi]) batch.push_back(split.train[idx]);

      model.zero_grads();
      auto loss = total_loss<Real>(model, batch, space, split.catalog, opts.loss);
      const double value = static_cast<double>(loss->item());
      if (!std::isfinite(value)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(bi));
      }
      backward(loss);
      adam.step();
      weighted_sum += value * static_cast<double>(batch.size());
      sample_count += batch.size();
    }
    const double mean = weighted_sum / static_cast<double>(sample_count);
    result.epoch_mean_loss.push_back(mean);
    if (log) {
      log->precision(17);
      (*log) << "epoch " << epoch << " loss " << mean << "\n";
    }
  }
  return result;
}

// Scores every test sample with the fused inference rule. Candidates are
// composed once and shared across samples; nothing is recorded.
template <class Real>
ScoreMatrix score_test_set(const CscNet<Real>& model, const DatasetSplit<Real>& split,
                           const SemanticSpace<Real>& space, const InferenceOptions& opts) {
  NoGradGuard no_grad;
  ScoreMatrix sm;
  sm.n_samples = split.test.size();
  sm.n_pairs = split.catalog.size();
  sm.scores.reserve(sm.n_samples * sm.n_pairs);
  sm.truths.reserve(sm.n_samples);
  sm.unseen.reserve(sm.n_pairs);
  for (std::size_t k = 0; k < split.catalog.size(); ++k) {
    sm.unseen.push_back(split.catalog.seen[k] ? 0 : 1);
  }

  std::vector<TensorPtr<Real>> candidates;
  if (opts.composition) candidates = candidate_embeddings(space, split.catalog, model.composer);

  for (const auto& sample : split.test) {
    const std::size_t truth = split.catalog.find(sample.attr_id, sample.obj_id);
    if (truth == CompositionCatalog::npos) {
      throw std::runtime_error("score_test_set: test sample pair missing from the catalog");
    }
    sm.truths.push_back(truth);
    const auto row = inference_score<Real>(model, sample.feature, space, split.catalog, opts,
                                           candidates);
    sm.scores.insert(sm.scores.end(), row.begin(), row.end());
  }
  return sm;
}

// Per-head accuracies of the first-stage classifiers over a sample group.
template <class Real>
std::pair<double, double> primitive_accuracy(const CscNet<Real>& model,
                                             std::span<const Sample<Real>> samples,
                                             const SemanticSpace<Real>& space, double temperature) {
  if (samples.empty()) throw std::runtime_error("primitive_accuracy: empty sample set");
  NoGradGuard no_grad;
  std::size_t attr_hits = 0, obj_hits = 0;
  for (const auto& sample : samples) {
    const auto a2o = forward_a2o<Real>(model, sample.feature, space, static_cast<Real>(temperature));
    const auto o2a = forward_o2a<Real>(model, sample.feature, space, static_cast<Real>(temperature));
    attr_hits += a2o.predicted_id == sample.attr_id;
    obj_hits += o2a.predicted_id == sample.obj_id;
  }
  return {static_cast<double>(attr_hits) / static_cast<double>(samples.size()),
          static_cast<double>(obj_hits) / static_cast<double>(samples.size())};
}

}  // namespace cscnet
