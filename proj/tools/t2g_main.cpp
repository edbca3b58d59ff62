#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "t2g/errors.hpp"
#include "t2g/minirdb.hpp"
#include "t2g/pipeline.hpp"

namespace {

void print_status(const t2g::StageStatus& status, const char* stage) {
  if (status.skipped) {
    std::printf("%s: unchanged, skipped\n", stage);
    return;
  }
  std::printf("%s: done\n", stage);
  for (const std::string& note : status.notes)
    std::printf("  %s\n", note.c_str());
}

// Optional JSON defaults; explicit flags win.
template <typename T>
void config_default(const CLI::App* sub, const char* flag,
                    const nlohmann::json& cfg, const char* key, T& value) {
  if (sub->count(flag) == 0 && cfg.contains(key)) value = cfg[key].get<T>();
}

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw t2g::ValidationError("cannot read config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw t2g::ValidationError("config " + path + ": " + e.what());
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Relational database distillation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON file with default settings");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load schema + CSVs into a workspace");
  std::string schema_path, data_dir, workspace;
  ingest->add_option("--schema", schema_path, "schema JSON path")->required();
  ingest->add_option("--data-dir", data_dir, "directory with <table>.csv files")->required();
  ingest->add_option("--out", workspace, "workspace directory")->required();

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "Fit tokenizers and cluster every table");
  t2g::PretrainConfig pre;
  pretrain->add_option("--workspace", workspace, "workspace directory")->required();
  pretrain->add_option("--ratio", pre.ratio, "synthetic rows per original training row");
  pretrain->add_option("--seed", pre.seed, "random seed");
  pretrain->add_option("--epochs", pre.epochs, "training epochs");
  pretrain->add_option("--lr", pre.lr, "learning rate");
  pretrain->add_option("--recluster", pre.recluster_period, "epochs between cluster refreshes");
  pretrain->add_option("--d-token", pre.d_token, "column token width");
  pretrain->add_option("--hidden", pre.hidden, "encoder width");
  pretrain->add_option("--layers", pre.layers, "encoder depth, 0 = one per table");
  pretrain->add_option("--weight-decay", pre.weight_decay, "L2 penalty");

  // distill
  auto* distill = app.add_subcommand("distill", "Compress the database into a synthetic graph");
  t2g::DistillStageConfig dis;
  distill->add_option("--workspace", workspace, "workspace directory")->required();
  distill->add_option("--beta", dis.distill.beta, "pseudo-loss weight");
  distill->add_option("--rho", dis.rho, "synthetic edge sparsity target");
  distill->add_option("--iters", dis.distill.iterations, "optimization iterations");
  distill->add_option("--lr", dis.distill.lr, "learning rate");
  distill->add_option("--lambda", dis.distill.lambda, "ridge coefficient");
  distill->add_option("--seed", dis.distill.seed, "random seed");
  distill->add_option("--hidden", dis.distill.hidden, "sampled encoder width");
  distill->add_option("--layers", dis.distill.layers, "sampled encoder depth");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Train on the artifact, score on held-out rows");
  t2g::EvaluateOptions ev;
  std::string model = "hgnn", baseline = "random", timing = "wall";
  evaluate->add_option("--workspace", workspace, "workspace directory")->required();
  evaluate->add_option("--model", model, "hgnn or mlp")
      ->check(CLI::IsMember({"hgnn", "mlp"}));
  evaluate->add_option("--repeats", ev.repeats, "training repetitions");
  evaluate->add_option("--baseline", baseline, "random, full, or none")
      ->check(CLI::IsMember({"random", "full", "none"}));
  evaluate->add_option("--epochs", ev.train.epochs, "downstream epochs");
  evaluate->add_option("--lr", ev.train.lr, "downstream learning rate");
  evaluate->add_option("--weight-decay", ev.train.weight_decay, "L2 penalty");
  evaluate->add_option("--hidden", ev.train.hidden, "downstream width");
  evaluate->add_option("--layers", ev.train.layers, "downstream depth");
  evaluate->add_option("--d-token", ev.train.d_token, "baseline token width");
  evaluate->add_option("--seed", ev.train.seed, "random seed");
  evaluate->add_option("--timing", timing, "wall or none")
      ->check(CLI::IsMember({"wall", "none"}));

  // report
  auto* report = app.add_subcommand("report", "Merge evaluation CSVs");
  report->add_option("--workspace", workspace, "workspace directory")->required();

  // gen-minirdb
  auto* gen = app.add_subcommand("gen-minirdb", "Generate a planted-structure test database");
  t2g::MiniRdbConfig mini;
  std::string out_dir, task = "classification";
  gen->add_option("--rows", mini.rows, "child table rows");
  gen->add_option("--parents", mini.parents, "parent table rows, 0 = rows/10");
  gen->add_option("--clusters", mini.clusters, "planted blocks per table");
  gen->add_option("--intra", mini.intra, "same-block link propensity");
  gen->add_option("--inter", mini.inter, "cross-block link propensity");
  gen->add_option("--task", task, "classification or regression")
      ->check(CLI::IsMember({"classification", "regression"}));
  gen->add_option("--noise", mini.noise, "label noise scale");
  gen->add_option("--seed", mini.seed, "random seed");
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  const nlohmann::json cfg = load_config(config_path);

  if (*ingest) {
    print_status(t2g::ingest_stage(schema_path, data_dir, workspace), "ingest");
  } else if (*pretrain) {
    config_default(pretrain, "--ratio", cfg, "ratio", pre.ratio);
    config_default(pretrain, "--epochs", cfg, "pretrain_epochs", pre.epochs);
    config_default(pretrain, "--lr", cfg, "pretrain_lr", pre.lr);
    config_default(pretrain, "--recluster", cfg, "recluster", pre.recluster_period);
    config_default(pretrain, "--d-token", cfg, "d_token", pre.d_token);
    config_default(pretrain, "--hidden", cfg, "hidden", pre.hidden);
    config_default(pretrain, "--layers", cfg, "layers", pre.layers);
    config_default(pretrain, "--weight-decay", cfg, "weight_decay", pre.weight_decay);
    print_status(t2g::pretrain_stage(workspace, pre), "pretrain");
  } else if (*distill) {
    config_default(distill, "--beta", cfg, "beta", dis.distill.beta);
    config_default(distill, "--rho", cfg, "rho", dis.rho);
    config_default(distill, "--iters", cfg, "iters", dis.distill.iterations);
    config_default(distill, "--lr", cfg, "distill_lr", dis.distill.lr);
    config_default(distill, "--lambda", cfg, "lambda", dis.distill.lambda);
    config_default(distill, "--hidden", cfg, "hidden", dis.distill.hidden);
    config_default(distill, "--layers", cfg, "layers", dis.distill.layers);
    print_status(t2g::distill_stage(workspace, dis), "distill");
  } else if (*evaluate) {
    config_default(evaluate, "--epochs", cfg, "eval_epochs", ev.train.epochs);
    config_default(evaluate, "--lr", cfg, "eval_lr", ev.train.lr);
    config_default(evaluate, "--weight-decay", cfg, "weight_decay", ev.train.weight_decay);
    config_default(evaluate, "--hidden", cfg, "hidden", ev.train.hidden);
    config_default(evaluate, "--layers", cfg, "layers", ev.train.layers);
    config_default(evaluate, "--d-token", cfg, "d_token", ev.train.d_token);
    ev.model = model == "mlp" ? t2g::ModelKind::kMlp : t2g::ModelKind::kHgnn;
    ev.baseline = baseline == "none"   ? t2g::BaselineKind::kNone
                  : baseline == "full" ? t2g::BaselineKind::kFull
                                       : t2g::BaselineKind::kRandom;
    ev.timing = timing == "wall";
    t2g::EvaluateResult result = t2g::evaluate_stage(workspace, ev);
    print_status(result.status, "evaluate");
    for (const t2g::EvalReport& row : result.reports)
      std::printf("  %s %s = %.4f (std %.4f)\n", row.config.c_str(),
                  row.metric.c_str(), row.mean, row.stddev);
  } else if (*report) {
    print_status(t2g::report_stage(workspace), "report");
  } else if (*gen) {
    mini.task = task == "regression" ? t2g::Task::kRegression
                                     : t2g::Task::kClassification;
    t2g::write_minirdb(t2g::generate_minirdb(mini), out_dir);
    std::printf("gen-minirdb: wrote schema.json, parent.csv, child.csv, "
                "truth.json to %s\n", out_dir.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const t2g::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const t2g::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
