// Command-line front end: gen-data, train, eval, ablate, beta-sweep,
// grad-check. Flags override config-file values; failures exit nonzero with a
// single-line error.

#include <algorithm>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cscnet/commands.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
};

void add_common_options(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "config file (key = value lines)");
  sub->add_option("--seed", args.seed, "override the run seed")->each([&args](const std::string&) {
    args.seed_given = true;
  });
  sub->add_option("--out", args.out, "output directory");
  sub->add_option("--set", args.sets, "override any config key as key=value")
      ->take_all()
      ->expected(-1);
}

cscnet::RunConfig build_config(const CommonArgs& args) {
  cscnet::RunConfig cfg;
  if (!args.config.empty()) cscnet::load_config_file(cfg, args.config);
  for (const std::string& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    }
    cscnet::apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_given) cfg.seed = args.seed;
  if (!args.out.empty()) cfg.out = args.out;
  return cfg;
}

std::string one_line(std::string msg) {
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  return msg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-specified cascaded networks for compositional zero-shot recognition"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, ablate_args, sweep_args, check_args;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic compositional dataset");
  add_common_options(gen, gen_args);
  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common_options(train, train_args);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with the bias-sweep protocol");
  add_common_options(eval, eval_args);
  auto* ablate = app.add_subcommand("ablate", "train and evaluate the branch and classifier variants");
  add_common_options(ablate, ablate_args);
  auto* sweep = app.add_subcommand("beta-sweep", "re-score one checkpoint across blend weights");
  add_common_options(sweep, sweep_args);
  auto* check = app.add_subcommand("grad-check", "verify gradients against central differences");
  add_common_options(check, check_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      cscnet::cmd_gen_data(build_config(gen_args));
    } else if (train->parsed()) {
      cscnet::cmd_train(build_config(train_args));
    } else if (eval->parsed()) {
      cscnet::cmd_eval(build_config(eval_args));
    } else if (ablate->parsed()) {
      cscnet::cmd_ablate(build_config(ablate_args));
    } else if (sweep->parsed()) {
      cscnet::cmd_beta_sweep(build_config(sweep_args));
    } else if (check->parsed()) {
      if (!cscnet::cmd_grad_check(build_config(check_args))) {
        std::cerr << "error: gradient check failed\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
