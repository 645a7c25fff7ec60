#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "tvs/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  long seed = -1;
  long iters = -1;
  long threads = -1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "key=value config file");
  cmd->add_option("--set", args.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", args.seed, "override the rng seed");
  cmd->add_option("--iters", args.iters, "override the iteration count");
  cmd->add_option("--threads", args.threads, "worker threads (0: auto, env TVS_THREADS)");
}

tvs::ExperimentConfig build_config(const CommonArgs& args) {
  tvs::KvConfig kv;
  if (!args.config.empty()) kv.load_file(args.config);
  for (const std::string& o : args.overrides) kv.apply_override(o);
  if (args.seed >= 0) kv.set("seed", std::to_string(args.seed));
  if (args.iters >= 0) kv.set("iterations", std::to_string(args.iters));
  if (args.threads >= 0) kv.set("threads", std::to_string(args.threads));
  if (!args.out.empty()) kv.set("output_dir", args.out);
  return tvs::build_experiment(kv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tvs: truncated variational sampling for binary-latent generative models"};
  app.require_subcommand(1);

  CommonArgs gen_args, fit_args, eval_args;
  std::string gen_out = "dataset.tvsd";
  std::string resume_path;
  std::string eval_params, eval_dataset;
  std::string dump_params, dump_out = "dump";

  CLI::App* gen = app.add_subcommand("generate", "generate a synthetic bars dataset");
  add_common(gen, gen_args);
  gen->add_option("--out", gen_out, "output dataset path");

  CLI::App* fit = app.add_subcommand("fit", "fit a model with truncated variational sampling");
  add_common(fit, fit_args);
  fit->add_option("--out", fit_args.out, "output directory");
  fit->add_option("--resume", resume_path, "continue from a fit-state checkpoint (.tvsf)");

  long eval_e_steps = -1;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(ev, eval_args);
  ev->add_option("--out", eval_args.out, "output directory");
  ev->add_option("--params", eval_params, "params (.tvsp) or fit-state (.tvsf) checkpoint")
      ->required();
  ev->add_option("--dataset", eval_dataset, "dataset file (defaults to the config's dataset)");
  ev->add_option("--e-steps", eval_e_steps, "number of held-out E-step passes");

  CLI::App* dump = app.add_subcommand("dump", "write dictionary images and csv from a checkpoint");
  dump->add_option("--params", dump_params, "params (.tvsp) or fit-state (.tvsf) checkpoint")
      ->required();
  dump->add_option("--out", dump_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      tvs::cmd_generate(build_config(gen_args), gen_out);
    } else if (fit->parsed()) {
      tvs::cmd_fit(build_config(fit_args), resume_path);
    } else if (ev->parsed()) {
      if (eval_e_steps >= 0) eval_args.overrides.push_back("eval.e_steps=" + std::to_string(eval_e_steps));
      tvs::cmd_eval(build_config(eval_args), eval_params, eval_dataset);
    } else if (dump->parsed()) {
      tvs::cmd_dump(dump_params, dump_out);
    }
  } catch (const tvs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
