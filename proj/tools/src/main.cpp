#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "commands.hpp"
#include "run_config.hpp"
#include "unlimitd/checkpoint.hpp"
#include "unlimitd/errors.hpp"
#include "unlimitd/parallel.hpp"

using namespace unlimitd;
using namespace unlimitd::cli;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

// Flag values; each is applied over the config file only when given.
struct Flags {
  std::string config_path;
  bool full_scale = false;

  // generate-data
  std::string clusters;
  int n_tasks = 0;
  int m_points = 0;
  std::uint64_t seed = 0;
  bool force = false;
  std::string out;

  // train
  std::string model;
  std::string variant;
  int alpha = 1;
  int epochs = 0;
  int s = 0;
  int k = 0;
  int n = 0;
  double lr = 0.0;
  double sigma_eps = 0.0;
  std::string widths;
  std::string dataset;
  std::string resume;
  int checkpoint_every = 0;
  double inner_lr = 0.0;
  int inner_steps = 0;
  int inner_steps_test = 0;
  int query_size = 0;

  // eval / predict
  std::string checkpoint;
  std::string k_list;
  std::string ood;
  bool uncertainty = false;
  bool no_mse = false;
  bool no_plots = false;
  std::string proj_seeds;
  int n_query = 0;
  int n_each = 0;
  std::string context;
  std::string query;
};

bool given(const CLI::App* app, const char* name) { return app->count(name) > 0; }

RunConfig base_config(const Flags& f) {
  RunConfig c = f.config_path.empty() ? RunConfig{} : load_run_config(f.config_path);
  if (f.full_scale) apply_full_scale(c);
  return c;
}

std::vector<int> parse_widths(const std::string& s) {
  std::vector<int> w = parse_int_list(s, "--widths");
  if (w.size() < 2) throw UsageError("--widths needs at least input and output widths");
  return w;
}

RunConfig resolve_generate(const CLI::App* app, const Flags& f) {
  RunConfig c = base_config(f);
  if (given(app, "--cluster")) c.data.clusters = task_kinds_from_list(f.clusters);
  if (given(app, "--N")) c.data.n_tasks = f.n_tasks;
  if (given(app, "--M")) c.data.m_points = f.m_points;
  if (given(app, "--seed")) c.data.seed = f.seed;
  return c;
}

RunConfig resolve_train(const CLI::App* app, const Flags& f) {
  RunConfig c = base_config(f);
  if (!f.resume.empty() && f.config_path.empty()) {
    // Resuming without a config file continues the checkpoint's own config.
    if (peek_model_kind(f.resume) == ModelKind::Maml) {
      c.model = "maml";
      c.maml = load_maml_checkpoint(f.resume).config;
    } else {
      c.model = "unlimitd";
      c.train = load_checkpoint(f.resume).config;
    }
    if (f.full_scale) apply_full_scale(c);
  }
  if (given(app, "--model")) c.model = f.model;
  if (c.model != "unlimitd" && c.model != "maml") throw UsageError("--model must be unlimitd or maml");
  if (given(app, "--dataset")) c.dataset = f.dataset;
  if (given(app, "--checkpoint-every")) c.checkpoint_every = f.checkpoint_every;

  if (c.model == "maml") {
    for (const char* name : {"--variant", "--alpha", "--s", "--sigma-eps"}) {
      if (given(app, name)) throw UsageError(std::string(name) + " does not apply to --model maml");
    }
    MamlConfig& m = c.maml;
    if (given(app, "--cluster")) m.clusters = task_kinds_from_list(f.clusters);
    if (given(app, "--epochs")) m.epochs = f.epochs;
    if (given(app, "--K")) m.context_size = f.k;
    if (given(app, "--n")) m.tasks_per_epoch = f.n;
    if (given(app, "--lr")) m.meta_lr = f.lr;
    if (given(app, "--seed")) m.seed = f.seed;
    if (given(app, "--widths")) m.layer_widths = parse_widths(f.widths);
    if (given(app, "--inner-lr")) m.inner_lr = f.inner_lr;
    if (given(app, "--inner-steps")) m.inner_steps_train = f.inner_steps;
    if (given(app, "--inner-steps-test")) m.inner_steps_test = f.inner_steps_test;
    if (given(app, "--query-size")) m.query_size = f.query_size;
    return c;
  }
  for (const char* name : {"--inner-lr", "--inner-steps", "--inner-steps-test", "--query-size"}) {
    if (given(app, name)) throw UsageError(std::string(name) + " only applies to --model maml");
  }
  TrainConfig& t = c.train;
  if (given(app, "--variant")) {
    try {
      t.variant = variant_from_string(f.variant);
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
  }
  if (given(app, "--alpha")) t.alpha = f.alpha;
  if (given(app, "--cluster")) t.clusters = task_kinds_from_list(f.clusters);
  if (given(app, "--epochs")) t.epochs = f.epochs;
  if (given(app, "--s")) t.subspace_size = f.s;
  if (given(app, "--K")) t.context_size = f.k;
  if (given(app, "--n")) t.tasks_per_epoch = f.n;
  if (given(app, "--lr")) t.learning_rate = f.lr;
  if (given(app, "--sigma-eps")) t.sigma_eps = f.sigma_eps;
  if (given(app, "--seed")) t.seed = f.seed;
  if (given(app, "--widths")) t.layer_widths = parse_widths(f.widths);
  return c;
}

RunConfig resolve_eval(const CLI::App* app, const Flags& f) {
  RunConfig c = base_config(f);
  EvalOptions& e = c.eval;
  if (given(app, "--K-list")) e.k_list = parse_int_list(f.k_list, "--K-list");
  if (given(app, "--n-tasks")) e.n_tasks = f.n_tasks;
  if (given(app, "--n-query")) e.n_query = f.n_query;
  if (given(app, "--n-each")) e.n_each = f.n_each;
  if (given(app, "--ood")) e.ood = task_kinds_from_list(f.ood);
  if (given(app, "--uncertainty")) e.uncertainty = true;
  if (given(app, "--no-mse")) e.mse = false;
  if (given(app, "--no-plots")) e.plots = false;
  if (given(app, "--proj-seeds")) e.proj_seeds = parse_seed_list(f.proj_seeds);
  if (given(app, "--seed")) e.seed = f.seed;
  if (given(app, "--cluster")) e.clusters = task_kinds_from_list(f.clusters);
  return c;
}

void configure_threads(int threads) {
  if (threads < 0) throw UsageError("--threads must be >= 0");
  if (threads == 0) {
    if (const char* env = std::getenv("UNLIMITD_THREADS"); env && *env) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        throw UsageError(std::string("UNLIMITD_THREADS is not an integer: ") + env);
      }
      if (threads < 0) throw UsageError("UNLIMITD_THREADS must be >= 0");
    }
  }
  set_thread_count(static_cast<std::size_t>(threads));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UnLiMiTD meta-learning: data generation, training, evaluation and prediction"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: UNLIMITD_THREADS or machine parallelism)");

  Flags f;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "JSON run config; flags override its values")->check(CLI::ExistingFile);
  };

  CLI::App* gen = app.add_subcommand("generate-data", "Write a finite task dataset as line-JSON");
  add_common(gen);
  gen->add_option("output", f.out, "Output .jsonl path")->required();
  gen->add_option("--cluster", f.clusters, "Comma-separated clusters: sine, line, quadratic");
  gen->add_option("--N", f.n_tasks, "Number of tasks");
  gen->add_option("--M", f.m_points, "Points per task");
  gen->add_option("--seed", f.seed, "Dataset seed");
  gen->add_flag("--force", f.force, "Overwrite an existing file");

  CLI::App* tr = app.add_subcommand("train", "Meta-train UnLiMiTD (or the MAML baseline)");
  add_common(tr);
  tr->add_option("--out", f.out, "Final checkpoint path")->default_val("model.json");
  tr->add_option("--model", f.model, "unlimitd (default) or maml");
  tr->add_option("--variant", f.variant, "Prior covariance: i, r or f");
  tr->add_option("--alpha", f.alpha, "Number of mixture components");
  tr->add_option("--cluster", f.clusters, "Comma-separated training clusters");
  tr->add_option("--epochs", f.epochs, "Training epochs");
  tr->add_option("--s", f.s, "Subspace size for variants r and f");
  tr->add_option("--K", f.k, "Context points per task");
  tr->add_option("--n", f.n, "Tasks per epoch");
  tr->add_option("--lr", f.lr, "Adam learning rate (meta learning rate for maml)");
  tr->add_option("--sigma-eps", f.sigma_eps, "Observation noise std of the GP");
  tr->add_option("--seed", f.seed, "Training seed");
  tr->add_option("--widths", f.widths, "Layer widths, e.g. 1,40,40,1");
  tr->add_option("--dataset", f.dataset, "Train on a finite dataset written by generate-data");
  tr->add_option("--resume", f.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--checkpoint-every", f.checkpoint_every, "Write <out>.epoch<N>.json every N epochs");
  tr->add_option("--inner-lr", f.inner_lr, "MAML inner learning rate");
  tr->add_option("--inner-steps", f.inner_steps, "MAML inner steps during meta-training");
  tr->add_option("--inner-steps-test", f.inner_steps_test, "MAML inner steps at test time");
  tr->add_option("--query-size", f.query_size, "MAML query points per task");
  tr->add_flag("--full-scale", f.full_scale, "Paper-scale epoch budget");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate checkpoints and write CSV/JSON/SVG reports");
  add_common(ev);
  ev->add_option("--checkpoint", f.checkpoint, "Checkpoint path; may contain {seed} with --proj-seeds")->required();
  ev->add_option("--out", f.out, "Report base path")->default_val("report");
  ev->add_option("--K-list", f.k_list, "Context sizes, e.g. 1,2,3,5,10");
  ev->add_option("--n-tasks", f.n_tasks, "Held-out tasks per K");
  ev->add_option("--n-query", f.n_query, "Query points per task");
  ev->add_option("--n-each", f.n_each, "Tasks per source for OoD AUC");
  ev->add_option("--ood", f.ood, "OoD clusters for AUC, e.g. lines,quadratic");
  ev->add_flag("--uncertainty", f.uncertainty, "Report mean posterior std per K");
  ev->add_flag("--no-mse", f.no_mse, "Skip the MSE rows");
  ev->add_flag("--no-plots", f.no_plots, "Skip SVG plots");
  ev->add_option("--proj-seeds", f.proj_seeds, "Average over checkpoints for these seeds");
  ev->add_option("--seed", f.seed, "Evaluation task seed");
  ev->add_option("--cluster", f.clusters, "In-distribution clusters (default: the model's)");
  ev->add_flag("--full-scale", f.full_scale, "1000 tasks per K and per OoD source");

  CLI::App* pr = app.add_subcommand("predict", "Predict at query inputs given a context CSV");
  pr->add_option("--checkpoint", f.checkpoint, "Checkpoint path")->required();
  pr->add_option("--context", f.context, "CSV with columns x,y")->required();
  pr->add_option("--query", f.query, "CSV with column x")->required();
  pr->add_option("--out", f.out, "Output CSV, or - for stdout")->default_val("-");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    configure_threads(threads);
    if (gen->parsed()) {
      cmd_generate_data(resolve_generate(gen, f), f.out, f.force);
    } else if (tr->parsed()) {
      cmd_train(resolve_train(tr, f), f.out, f.resume);
    } else if (ev->parsed()) {
      cmd_eval(resolve_eval(ev, f), f.checkpoint, f.out);
    } else if (pr->parsed()) {
      cmd_predict(f.checkpoint, f.context, f.query, f.out);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConditioningError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const SketchRankError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
