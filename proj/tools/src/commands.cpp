#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>

#include "csv_io.hpp"
#include "unlimitd/checkpoint.hpp"
#include "unlimitd/errors.hpp"
#include "unlimitd/eval.hpp"
#include "unlimitd/report.hpp"

namespace unlimitd::cli {

using nlohmann::json;

std::string path_stem(const std::string& path) {
  const std::filesystem::path p(path);
  if (!p.has_extension()) return path;
  return (p.parent_path() / p.stem()).string();
}

namespace {

void write_manifest(const std::string& path, const std::string& command, const json& config, std::uint64_t seed) {
  write_text_file(path, run_manifest(command, config, seed).dump(2) + "\n");
}

std::string trace_csv(const std::vector<TraceEntry>& trace) {
  std::string out = "epoch,nll\n";
  for (const TraceEntry& e : trace) out += std::to_string(e.epoch) + ',' + format_double(e.nll) + '\n';
  return out;
}

int progress_stride(int epochs) { return std::max(1, epochs / 10); }

TrainingData training_data(const RunConfig& config, const std::vector<TaskKind>& clusters) {
  if (!config.dataset.empty()) return FiniteDataset::read_jsonl(config.dataset);
  return TaskSampler(clusters);
}

void train_unlimitd(const RunConfig& config, const std::string& out_path, const std::string& resume_path) {
  const TrainConfig& tc = config.train;
  try {
    tc.validate();
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  const std::string stem = path_stem(out_path);
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);

  TrainHooks hooks;
  hooks.checkpoint_every = config.checkpoint_every;
  hooks.on_checkpoint = [&](const Checkpoint& c) {
    if (c.epoch < tc.epochs) save_checkpoint(c, stem + ".epoch" + std::to_string(c.epoch) + ".json");
  };
  const int stride = progress_stride(tc.epochs);
  hooks.on_epoch = [&](const TraceEntry& e) {
    if (e.epoch % stride == 0) std::cerr << "epoch " << e.epoch << "/" << tc.epochs << " nll " << e.nll << "\n";
  };

  const TrainResult r = train(tc, training_data(config, tc.clusters), std::move(resume), hooks);
  save_checkpoint(r.checkpoint, out_path);
  if (r.phase_boundary) save_checkpoint(*r.phase_boundary, stem + ".phase1.json");
  write_text_file(stem + ".trace.csv", trace_csv(r.trace));
  json resolved = to_json(config);
  resolved.erase("maml");
  resolved.erase("eval");
  resolved.erase("data");
  resolved["resume"] = resume_path;
  write_manifest(stem + ".manifest.json", "train", resolved, tc.seed);
  std::cout << "trained unlimitd-" << to_string(tc.variant) << " (alpha " << tc.alpha << ") to epoch "
            << r.checkpoint.epoch << "; skipped batches " << r.skipped_batches << "; wrote " << out_path << "\n";
}

void train_maml(const RunConfig& config, const std::string& out_path, const std::string& resume_path) {
  const MamlConfig& mc = config.maml;
  try {
    mc.validate();
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  const std::string stem = path_stem(out_path);
  std::optional<MamlState> state;
  if (!resume_path.empty()) state = load_maml_checkpoint(resume_path);
  const TrainingData data = training_data(config, mc.clusters);

  // Snapshots come from running in chunks; resuming is bit-exact, so the
  // chunked run equals the uninterrupted one.
  std::vector<TraceEntry> trace;
  int epoch = state ? state->epoch : 0;
  const int stride = progress_stride(mc.epochs);
  do {
    MamlConfig chunk = mc;
    if (config.checkpoint_every > 0) {
      chunk.epochs = std::min(mc.epochs, (epoch / config.checkpoint_every + 1) * config.checkpoint_every);
    }
    MamlResult r = meta_train(chunk, data, std::move(state));
    for (const TraceEntry& e : r.trace) {
      if (e.epoch % stride == 0) std::cerr << "epoch " << e.epoch << "/" << mc.epochs << " mse " << e.nll << "\n";
    }
    trace.insert(trace.end(), r.trace.begin(), r.trace.end());
    epoch = r.state.epoch;
    r.state.config = mc;
    if (epoch < mc.epochs) save_maml_checkpoint(r.state, stem + ".epoch" + std::to_string(epoch) + ".json");
    state = std::move(r.state);
  } while (epoch < mc.epochs);

  save_maml_checkpoint(*state, out_path);
  write_text_file(stem + ".trace.csv", trace_csv(trace));
  json resolved = to_json(config);
  resolved.erase("train");
  resolved.erase("eval");
  resolved.erase("data");
  resolved["resume"] = resume_path;
  write_manifest(stem + ".manifest.json", "train", resolved, mc.seed);
  std::cout << "trained maml to epoch " << epoch << "; wrote " << out_path << "\n";
}

struct LoadedModel {
  std::unique_ptr<Predictor> predictor;
  std::string id;
  std::vector<TaskKind> clusters;
  std::uint64_t seed = 0;
  std::size_t num_clusters = 1;
};

LoadedModel load_model(const std::string& path) {
  LoadedModel m;
  if (peek_model_kind(path) == ModelKind::Maml) {
    const MamlState s = load_maml_checkpoint(path);
    m.id = "maml";
    m.clusters = s.config.clusters;
    m.seed = s.config.seed;
    m.predictor = std::make_unique<MamlPredictor>(s.params(), s.config, m.id);
    return m;
  }
  const Checkpoint c = load_checkpoint(path);
  m.id = std::string("unlimitd-") + to_string(c.config.variant);
  if (c.config.variant == Variant::F && c.phase == TrainPhase::Identity) m.id += "-phase1";
  if (c.config.alpha > 1) m.id += "-mix" + std::to_string(c.config.alpha);
  m.clusters = c.config.clusters;
  m.seed = c.config.seed;
  m.num_clusters = c.mus.size();
  m.predictor = std::make_unique<UnlimitdPredictor>(c.model(), m.id);
  return m;
}

struct SeedResult {
  std::vector<MseSummary> mse;
  std::vector<std::optional<double>> auc;  // per K
  std::vector<UncertaintyPoint> stddev;
};

SeedResult evaluate(const Predictor& model, const std::vector<TaskKind>& clusters, const EvalOptions& e) {
  SeedResult r;
  const EvalTaskSource in_dist{clusters, e.seed};
  if (e.mse) r.mse = mse_eval(model, in_dist, e.k_list, e.n_tasks, e.n_query);
  r.auc.assign(e.k_list.size(), std::nullopt);
  if (!e.ood.empty()) {
    const EvalTaskSource ood{e.ood, derive_seed(e.seed, 200)};
    for (std::size_t i = 0; i < e.k_list.size(); ++i) {
      if (e.k_list[i] >= 1) r.auc[i] = ood_auc(model, in_dist, ood, e.k_list[i], e.n_each);
    }
  }
  if (e.uncertainty) r.stddev = uncertainty_curve(model, in_dist, e.k_list, e.n_tasks, e.n_query);
  return r;
}

std::string replace_seed(std::string path, std::uint64_t seed) {
  const std::string token = "{seed}";
  for (auto pos = path.find(token); pos != std::string::npos; pos = path.find(token)) {
    path.replace(pos, token.size(), std::to_string(seed));
  }
  return path;
}

}  // namespace

void cmd_generate_data(const RunConfig& config, const std::string& out_path, bool force) {
  const DataOptions& d = config.data;
  if (d.n_tasks < 1) throw UsageError("--N must be >= 1");
  if (d.m_points < 1) throw UsageError("--M must be >= 1");
  if (!force && std::filesystem::exists(out_path)) {
    throw UsageError("'" + out_path + "' already exists (pass --force to overwrite)");
  }
  const FiniteDataset ds = FiniteDataset::generate(d.clusters, d.n_tasks, d.m_points, d.seed);
  ds.write_jsonl(out_path);
  write_manifest(path_stem(out_path) + ".manifest.json", "generate-data", {{"data", to_json(config).at("data")}},
                 d.seed);
  std::cout << "N=" << d.n_tasks << " M=" << d.m_points << " seed=" << d.seed << " -> " << out_path << "\n";
}

void cmd_train(const RunConfig& config, const std::string& out_path, const std::string& resume_path) {
  if (config.checkpoint_every < 0) throw UsageError("--checkpoint-every must be >= 0");
  if (config.model == "maml") {
    train_maml(config, out_path, resume_path);
  } else {
    train_unlimitd(config, out_path, resume_path);
  }
}

void cmd_eval(const RunConfig& config, const std::string& checkpoint, const std::string& out_base) {
  const EvalOptions& e = config.eval;
  if (!e.mse && e.ood.empty() && !e.uncertainty) throw UsageError("nothing to evaluate (enable MSE, --ood or --uncertainty)");
  if (e.n_tasks < 1 || e.n_query < 1 || e.n_each < 1) throw UsageError("task counts must be >= 1");
  for (std::size_t i = 0; i < e.k_list.size(); ++i) {
    if (e.k_list[i] < 0 || (i > 0 && e.k_list[i] <= e.k_list[i - 1])) {
      throw UsageError("--K-list must be non-negative and strictly increasing");
    }
  }
  if (e.k_list.empty()) throw UsageError("--K-list is empty");

  std::vector<std::string> paths;
  const bool templated = checkpoint.find("{seed}") != std::string::npos;
  if (!e.proj_seeds.empty()) {
    if (!templated) throw UsageError("--proj-seeds needs a checkpoint path containing {seed}");
    for (std::uint64_t s : e.proj_seeds) paths.push_back(replace_seed(checkpoint, s));
  } else {
    if (templated) throw UsageError("checkpoint path contains {seed} but no --proj-seeds were given");
    paths.push_back(checkpoint);
  }

  EvalReport report;
  std::vector<SeedResult> results;
  for (const std::string& path : paths) {
    const LoadedModel m = load_model(path);
    if (report.model_id.empty()) {
      report.model_id = m.id;
    } else if (report.model_id != m.id) {
      throw UsageError("checkpoint/model mismatch: '" + path + "' holds " + m.id + ", expected " + report.model_id);
    }
    if (!m.predictor->probabilistic() && (e.uncertainty || !e.ood.empty())) {
      throw UsageError(std::string(e.uncertainty ? "uncertainty" : "OoD") + " metric is unsupported for " + m.id +
                       " (point predictor without a likelihood or covariance)");
    }
    report.seeds.push_back(m.seed);
    std::cerr << "evaluating " << path << "\n";
    results.push_back(evaluate(*m.predictor, e.clusters.empty() ? m.clusters : e.clusters, e));
  }

  report.n_tasks = e.n_tasks;
  report.n_query = e.n_query;
  report.n_each = e.n_each;
  report.single_task_ci = results.size() == 1 && e.n_tasks == 1;
  for (std::size_t i = 0; i < e.k_list.size(); ++i) {
    ReportRow row;
    row.k = e.k_list[i];
    if (e.mse) {
      if (results.size() == 1) {
        row.mean_mse = results[0].mse[i].mean;
        row.ci95_mse = results[0].mse[i].ci95;
      } else {
        std::vector<double> means;
        for (const SeedResult& r : results) means.push_back(r.mse[i].mean);
        const MseSummary across = summarize(row.k, means);
        row.mean_mse = across.mean;
        row.ci95_mse = across.ci95;
      }
    }
    if (results[0].auc[i]) {
      double sum = 0.0;
      for (const SeedResult& r : results) sum += *r.auc[i];
      row.auc = sum / static_cast<double>(results.size());
    }
    if (e.uncertainty) {
      double sum = 0.0;
      for (const SeedResult& r : results) sum += r.stddev[i].mean_std;
      row.mean_posterior_std = sum / static_cast<double>(results.size());
    }
    report.rows.push_back(row);
  }

  json resolved = to_json(config);
  resolved.erase("train");
  resolved.erase("maml");
  resolved.erase("data");
  resolved["checkpoints"] = paths;
  const json manifest = run_manifest("eval", resolved, e.seed);
  report.manifest_hash = manifest_hash(manifest);
  write_text_file(out_base + ".manifest.json", manifest.dump(2) + "\n");
  write_report(report, out_base, e.plots);

  std::printf("%-4s %-14s %-12s %-8s %-10s\n", "K", "mse", "ci95", "auc", "post_std");
  for (const ReportRow& row : report.rows) {
    const auto cell = [](const std::optional<double>& v, const char* f) {
      char buf[32];
      if (!v) return std::string("-");
      std::snprintf(buf, sizeof(buf), f, *v);
      return std::string(buf);
    };
    std::printf("%-4d %-14s %-12s %-8s %-10s\n", row.k, cell(row.mean_mse, "%.6g").c_str(),
                cell(row.ci95_mse, "%.4g").c_str(), cell(row.auc, "%.4f").c_str(),
                cell(row.mean_posterior_std, "%.5g").c_str());
  }
  std::cout << "model " << report.model_id << ", report " << out_base << ".{csv,json}, manifest "
            << report.manifest_hash << "\n";
}

void cmd_predict(const std::string& checkpoint, const std::string& context_path, const std::string& query_path,
                 const std::string& out_path) {
  const LoadedModel m = load_model(checkpoint);
  Matrix cx;
  Vector cy;
  read_context_csv(context_path, cx, cy);
  const Matrix qx = read_query_csv(query_path);

  PredictionRows rows;
  rows.x = qx;
  if (qx.cols() == 0) {
    rows.mean.resize(0);
    if (m.predictor->probabilistic()) rows.std = Vector(0);
    if (m.num_clusters > 1) rows.cluster = 0;
  } else {
    const ModelPrediction p = m.predictor->predict(cx, cy, qx);
    rows.mean = p.predictive.mean;
    if (p.has_covariance) rows.std = p.predictive.stddev();
    if (m.num_clusters > 1) rows.cluster = p.cluster;
  }
  const std::string text = prediction_csv(rows);
  if (out_path == "-") {
    std::cout << text;
    return;
  }
  write_text_file(out_path, text);
  write_manifest(path_stem(out_path) + ".manifest.json", "predict",
                 {{"checkpoint", checkpoint}, {"context", context_path}, {"query", query_path}}, m.seed);
}

}  // namespace unlimitd::cli
