#pragma once

// Operator surface behind the CLI subcommands. Every command is a pure
// function of its RunConfig: identical config and seed reproduce identical
// output files.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cscnet/checkpoint.hpp"
#include "cscnet/config.hpp"
#include "cscnet/data.hpp"
#include "cscnet/eval.hpp"
#include "cscnet/grad_check.hpp"
#include "cscnet/model.hpp"
#include "cscnet/pipeline.hpp"

namespace cscnet {

namespace detail {

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out);
  return (std::filesystem::path(cfg.out) / name).string();
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

template <class Real>
struct LoadedData {
  SemanticSpace<Real> space;
  DatasetSplit<Real> split;
};

template <class Real>
LoadedData<Real> load_or_generate(const RunConfig& cfg) {
  if (cfg.data == "synth") {
    auto space = generate_synthetic_embeddings<Real>(cfg.n_attrs, cfg.n_objs, cfg.d, cfg.seed);
    auto split = generate_synthetic_dataset<Real>(cfg.synth_spec(), space);
    return {std::move(space), std::move(split)};
  }
  auto space = load_embeddings<Real>(cfg.embeddings);
  auto split = load_dataset<Real>(cfg.features, cfg.labels, space);
  return {std::move(space), std::move(split)};
}

template <class Real>
CscNet<Real> init_model(const RunConfig& cfg, std::uint64_t seed) {
  return CscNet<Real>::init(cfg.model_dims(),
                            classifier_kind_from_string(cfg.primitive_classifier),
                            classifier_kind_from_string(cfg.composition_classifier), seed);
}

// ---------------------------------------------------------------- gen-data

template <class Real>
void run_gen_data(const RunConfig& cfg, std::ostream& out) {
  if (cfg.data != "synth") throw std::runtime_error("gen-data: requires data = synth");
  auto data = load_or_generate<Real>(cfg);
  const auto emb_path = detail::out_path(cfg, "embeddings.txt");
  const auto feat_path = detail::out_path(cfg, "features.bin");
  const auto labels_path = detail::out_path(cfg, "labels.txt");
  write_embeddings(data.space, emb_path);
  save_features(data.split, feat_path);
  save_labels(data.split, data.space, labels_path);

  std::size_t seen_pairs = 0;
  for (auto flag : data.split.catalog.seen) seen_pairs += flag;
  out << "attributes " << data.space.n_attrs() << " objects " << data.space.n_objs() << " pairs "
      << data.split.catalog.size() << " seen " << seen_pairs << " unseen "
      << (data.split.catalog.size() - seen_pairs) << "\n";
  out << "train " << data.split.train.size() << " test " << data.split.test.size() << "\n";
  out << "wrote " << emb_path << ' ' << feat_path << ' ' << labels_path << "\n";
}

inline void cmd_gen_data(const RunConfig& cfg, std::ostream& out = std::cout) {
  validate_config(cfg);
  cfg.profile == "f32" ? run_gen_data<float>(cfg, out) : run_gen_data<double>(cfg, out);
}

// ------------------------------------------------------------------- train

template <class Real>
void run_train(const RunConfig& cfg, std::ostream& out) {
  auto data = load_or_generate<Real>(cfg);
  auto model = init_model<Real>(cfg, cfg.seed);

  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.lr = cfg.lr;
  opts.seed = cfg.seed;
  opts.loss = cfg.loss_options();

  const auto log_path = detail::out_path(cfg, "train_log.txt");
  auto log = detail::open_out(log_path);
  const auto result = train_model<Real>(model, data.split, data.space, opts, &log);

  const auto ckpt_path =
      cfg.checkpoint.empty() ? detail::out_path(cfg, "checkpoint.ckpt") : cfg.checkpoint;
  save_checkpoint(model, ckpt_path);
  out.precision(17);
  out << "trained " << cfg.epochs << " epochs, first loss " << result.epoch_mean_loss.front()
      << ", final loss " << result.epoch_mean_loss.back() << "\n";
  out << "wrote " << ckpt_path << ' ' << log_path << "\n";
}

inline void cmd_train(const RunConfig& cfg, std::ostream& out = std::cout) {
  validate_config(cfg);
  cfg.profile == "f32" ? run_train<float>(cfg, out) : run_train<double>(cfg, out);
}

// -------------------------------------------------------------------- eval

template <class Real>
void check_checkpoint_dims(const CscNet<Real>& model, const RunConfig& cfg) {
  const ModelDims want = cfg.model_dims();
  auto mismatch = [](const char* field, std::size_t got, std::size_t expected) {
    throw std::runtime_error("eval: checkpoint " + std::string(field) + "=" + std::to_string(got) +
                             " differs from config " + std::string(field) + "=" +
                             std::to_string(expected));
  };
  if (model.dims.d_x != want.d_x) mismatch("d_x", model.dims.d_x, want.d_x);
  if (model.dims.d != want.d) mismatch("d", model.dims.d, want.d);
  if (model.dims.d_v != want.d_v) mismatch("d_v", model.dims.d_v, want.d_v);
  if (model.dims.d_c != want.d_c) mismatch("d_c", model.dims.d_c, want.d_c);
  if (model.dims.hidden != want.hidden) mismatch("hidden", model.dims.hidden, want.hidden);
}

template <class Real>
EvalReport run_eval(const RunConfig& cfg, std::ostream& out) {
  if (cfg.checkpoint.empty()) throw std::runtime_error("eval: a checkpoint path is required");
  auto data = load_or_generate<Real>(cfg);
  auto model = load_checkpoint<Real>(cfg.checkpoint);
  check_checkpoint_dims(model, cfg);

  const auto sm = score_test_set<Real>(model, data.split, data.space, cfg.inference_options());
  const auto report = evaluate(sm, cfg.n_biases);

  const auto csv_path = detail::out_path(cfg, "report.csv");
  auto csv = detail::open_out(csv_path);
  write_curve_csv(report, csv);
  const auto summary_path = detail::out_path(cfg, "report.txt");
  detail::open_out(summary_path) << format_summary(report);
  out << format_summary(report);
  out << "wrote " << csv_path << ' ' << summary_path << "\n";
  return report;
}

inline void cmd_eval(const RunConfig& cfg, std::ostream& out = std::cout) {
  validate_config(cfg);
  cfg.profile == "f32" ? (void)run_eval<float>(cfg, out) : (void)run_eval<double>(cfg, out);
}

// -------------------------------------------------------------- beta-sweep

template <class Real>
void run_beta_sweep(const RunConfig& cfg, std::ostream& out) {
  if (cfg.checkpoint.empty()) throw std::runtime_error("beta-sweep: a checkpoint path is required");
  auto data = load_or_generate<Real>(cfg);
  auto model = load_checkpoint<Real>(cfg.checkpoint);
  check_checkpoint_dims(model, cfg);

  const auto csv_path = detail::out_path(cfg, "beta_sweep.csv");
  auto csv = detail::open_out(csv_path);
  csv << "beta,auc,hm,seen,unseen\n";
  char row[256];
  for (double beta : cfg.betas) {
    InferenceOptions opts = cfg.inference_options();
    opts.beta = beta;
    const auto sm = score_test_set<Real>(model, data.split, data.space, opts);
    const auto report = evaluate(sm, cfg.n_biases);
    std::snprintf(row, sizeof(row), "%.6f,%.6f,%.6f,%.6f,%.6f\n", beta, report.auc, report.hm,
                  report.seen, report.unseen);
    csv << row;
  }
  out << "wrote " << csv_path << " (" << cfg.betas.size() << " rows)\n";
}

inline void cmd_beta_sweep(const RunConfig& cfg, std::ostream& out = std::cout) {
  validate_config(cfg);
  cfg.profile == "f32" ? run_beta_sweep<float>(cfg, out) : run_beta_sweep<double>(cfg, out);
}

// ------------------------------------------------------------------ ablate

struct AblationVariant {
  std::string name;
  bool a2o, o2a, composition;
  std::string primitive_cls, composition_cls;
  double beta;
};

inline std::vector<AblationVariant> ablation_variants(const RunConfig& cfg) {
  // Branch rows are additive over the composition baseline; classifier rows
  // cover the four head placements with all branches enabled.
  return {
      {"composition_only", false, false, true, cfg.primitive_classifier, cfg.composition_classifier, 0.0},
      {"only_a2o", true, false, true, cfg.primitive_classifier, cfg.composition_classifier, cfg.beta},
      {"only_o2a", false, true, true, cfg.primitive_classifier, cfg.composition_classifier, cfg.beta},
      {"full", true, true, true, cfg.primitive_classifier, cfg.composition_classifier, cfg.beta},
      {"m1_nonpar_nonpar", true, true, true, "nonparametric", "nonparametric", cfg.beta},
      {"m2_par_par", true, true, true, "parametric", "parametric", cfg.beta},
      {"m3_nonpar_par", true, true, true, "nonparametric", "parametric", cfg.beta},
      {"m4_par_nonpar", true, true, true, "parametric", "nonparametric", cfg.beta},
  };
}

struct AblationRow {
  std::string variant;
  std::string seed;  // number or "mean"
  std::uint64_t dataset_hash;
  EvalReport report;
};

template <class Real>
std::vector<AblationRow> run_ablation(const RunConfig& cfg) {
  if (cfg.d_v != cfg.d) {
    throw std::runtime_error("ablate: the nonparametric variants require d_v == d");
  }
  auto data = load_or_generate<Real>(cfg);
  const std::uint64_t dataset_hash = hash_dataset(data.split, data.space);

  std::vector<AblationRow> rows;
  for (const auto& variant : ablation_variants(cfg)) {
    RunConfig vc = cfg;
    vc.branch_a2o = variant.a2o;
    vc.branch_o2a = variant.o2a;
    vc.branch_composition = variant.composition;
    vc.primitive_classifier = variant.primitive_cls;
    vc.composition_classifier = variant.composition_cls;
    vc.beta = variant.beta;
    validate_config(vc);

    double auc = 0, hm = 0, seen = 0, unseen = 0;
    for (std::size_t s = 0; s < cfg.ablate_seeds; ++s) {
      const std::uint64_t train_seed = cfg.seed + s;
      auto model = init_model<Real>(vc, train_seed);
      TrainOptions topts;
      topts.epochs = vc.epochs;
      topts.batch_size = vc.batch_size;
      topts.lr = vc.lr;
      topts.seed = train_seed;
      topts.loss = vc.loss_options();
      train_model<Real>(model, data.split, data.space, topts);

      const auto sm = score_test_set<Real>(model, data.split, data.space, vc.inference_options());
      const auto report = evaluate(sm, vc.n_biases);
      rows.push_back({variant.name, std::to_string(train_seed), dataset_hash, report});
      auc += report.auc;
      hm += report.hm;
      seen += report.seen;
      unseen += report.unseen;
    }
    const auto n = static_cast<double>(cfg.ablate_seeds);
    EvalReport mean;
    mean.auc = auc / n;
    mean.hm = hm / n;
    mean.seen = seen / n;
    mean.unseen = unseen / n;
    rows.push_back({variant.name, "mean", dataset_hash, mean});
  }
  return rows;
}

template <class Real>
void run_ablate(const RunConfig& cfg, std::ostream& out) {
  const auto rows = run_ablation<Real>(cfg);
  const auto csv_path = detail::out_path(cfg, "ablation.csv");
  auto csv = detail::open_out(csv_path);
  csv << "variant,seed,dataset_hash,auc,hm,seen,unseen\n";
  char buf[320];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%016" PRIx64 ",%.6f,%.6f,%.6f,%.6f\n",
                  row.variant.c_str(), row.seed.c_str(), row.dataset_hash, row.report.auc,
                  row.report.hm, row.report.seen, row.report.unseen);
    csv << buf;
  }
  out << "wrote " << csv_path << " (" << rows.size() << " rows)\n";
}

inline void cmd_ablate(const RunConfig& cfg, std::ostream& out = std::cout) {
  validate_config(cfg);
  cfg.profile == "f32" ? run_ablate<float>(cfg, out) : run_ablate<double>(cfg, out);
}

// -------------------------------------------------------------- grad-check

// Builds a tiny seen-only batch plus its catalog and checks every loss term
// and the joint loss (alpha in {0, 1, 4}) against central differences.
// Always runs at 64-bit regardless of the configured profile.
inline bool run_grad_check(const RunConfig& cfg, std::ostream& out) {
  using Real = double;
  auto space = generate_synthetic_embeddings<Real>(cfg.n_attrs, cfg.n_objs, cfg.d, cfg.seed);
  auto model = init_model<Real>(cfg, cfg.seed);

  CompositionCatalog catalog;
  for (std::size_t a = 0; a < space.n_attrs(); ++a) {
    for (std::size_t o = 0; o < space.n_objs(); ++o) {
      catalog.pairs.emplace_back(a, o);
      catalog.seen.push_back(1);
    }
  }
  catalog.seen.back() = 0;  // keep one unseen pair so the catalog is realistic

  std::mt19937_64 rng(mix_seed(cfg.seed, 0xfeed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Sample<Real>> batch;
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<Real> feature(cfg.d_x);
    for (Real& v : feature) v = gauss(rng);
    const auto& pair = catalog.pairs[i % (catalog.size() - 1)];
    batch.push_back({constant<Real>({cfg.d_x}, std::move(feature)), pair.first, pair.second});
  }

  const auto params = model.named_parameters();
  const std::span<const NamedParam<Real>> param_span(params);

  enum class Term { attr, obj, attr2obj, obj2attr, comp };
  auto term_loss = [&](Term term) {
    LossOptions opts = cfg.loss_options();
    opts.a2o = term == Term::attr || term == Term::attr2obj;
    opts.o2a = term == Term::obj || term == Term::obj2attr;
    opts.composition = term == Term::comp;
    std::vector<TensorPtr<Real>> candidates;
    if (opts.composition) candidates = candidate_embeddings(space, catalog, model.composer);
    std::vector<TensorPtr<Real>> per_sample;
    for (const auto& sample : batch) {
      const auto losses = sample_losses<Real>(model, sample, space, catalog, candidates, opts);
      switch (term) {
        case Term::attr: per_sample.push_back(losses.attr); break;
        case Term::obj: per_sample.push_back(losses.obj); break;
        case Term::attr2obj: per_sample.push_back(losses.attr2obj); break;
        case Term::obj2attr: per_sample.push_back(losses.obj2attr); break;
        case Term::comp: per_sample.push_back(losses.comp); break;
      }
    }
    return mean_of(per_sample);
  };

  bool all_pass = true;
  auto run_one = [&](const std::string& label, auto&& f) {
    const auto report = grad_check<Real>(f, param_span, cfg.grad_check_step, cfg.grad_check_tol,
                                         cfg.corrupt_block);
    all_pass = all_pass && report.pass;
    char line[256];
    std::snprintf(line, sizeof(line), "%s %s max_rel_err=%.3e worst=%s[%zu]\n",
                  report.pass ? "ok" : "FAIL", label.c_str(), report.max_rel_err,
                  report.worst_param.c_str(), report.worst_index);
    out << line;
  };

  run_one("L_a", [&] { return term_loss(Term::attr); });
  run_one("L_o", [&] { return term_loss(Term::obj); });
  run_one("L_a2o", [&] { return term_loss(Term::attr2obj); });
  run_one("L_o2a", [&] { return term_loss(Term::obj2attr); });
  run_one("L_c", [&] { return term_loss(Term::comp); });
  for (double alpha : {0.0, 1.0, 4.0}) {
    LossOptions opts = cfg.loss_options();
    opts.alpha = alpha;
    run_one("L_total(alpha=" + std::to_string(static_cast<int>(alpha)) + ")", [&] {
      return total_loss<Real>(model, batch, space, catalog, opts);
    });
  }
  return all_pass;
}

inline bool cmd_grad_check(const RunConfig& cfg, std::ostream& out = std::cout) {
  validate_config(cfg);
  return run_grad_check(cfg, out);
}

}  // namespace cscnet
