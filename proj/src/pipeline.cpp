#include "t2g/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "t2g/artifact.hpp"
#include "t2g/errors.hpp"
#include "t2g/rng.hpp"
#include "t2g/sbm.hpp"

namespace t2g {

namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
  if (!out) throw ValidationError("short write to " + path);
}

std::string ws_file(const std::string& workspace, const std::string& name) {
  return (fs::path(workspace) / name).string();
}

void require_stage_file(const std::string& workspace, const std::string& name,
                        const std::string& producer) {
  if (!fs::exists(ws_file(workspace, name)))
    throw ValidationError(name + " missing from " + workspace + "; run " +
                          producer + " first");
}

std::uint64_t stage_fingerprint(const std::vector<std::string>& input_files,
                                const std::string& config_text) {
  std::string all = config_text;
  for (const std::string& file : input_files) {
    all += '\0';
    all += slurp(file);
  }
  return fnv1a64(all);
}

// True when the stored hash matches and every output still exists.
bool stage_unchanged(const std::string& workspace, const std::string& stage,
                     std::uint64_t fingerprint,
                     const std::vector<std::string>& outputs) {
  const std::string hash_path = ws_file(workspace, stage + ".hash");
  std::ifstream in(hash_path);
  std::uint64_t stored = 0;
  if (!(in >> std::hex >> stored) || stored != fingerprint) return false;
  for (const std::string& name : outputs)
    if (!fs::exists(ws_file(workspace, name))) return false;
  return true;
}

void store_hash(const std::string& workspace, const std::string& stage,
                std::uint64_t fingerprint) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx\n",
                static_cast<unsigned long long>(fingerprint));
  spill(ws_file(workspace, stage + ".hash"), buf);
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string pretrain_config_text(const PretrainConfig& c) {
  std::ostringstream out;
  out << "pretrain epochs=" << c.epochs << " lr=" << fmt_double(c.lr)
      << " recluster=" << c.recluster_period << " seed=" << c.seed
      << " ratio=" << fmt_double(c.ratio) << " d_token=" << c.d_token
      << " hidden=" << c.hidden << " layers=" << c.layers
      << " weight_decay=" << fmt_double(c.weight_decay);
  return out.str();
}

std::string distill_config_text(const DistillStageConfig& c) {
  std::ostringstream out;
  out << "distill iters=" << c.distill.iterations
      << " lr=" << fmt_double(c.distill.lr)
      << " lambda=" << fmt_double(c.distill.lambda)
      << " beta=" << fmt_double(c.distill.beta) << " seed=" << c.distill.seed
      << " hidden=" << c.distill.hidden << " layers=" << c.distill.layers
      << " rho=" << fmt_double(c.rho);
  return out.str();
}

const char* model_name(ModelKind kind) {
  return kind == ModelKind::kHgnn ? "hgnn" : "mlp";
}

const char* baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kNone: return "none";
    case BaselineKind::kRandom: return "random";
    case BaselineKind::kFull: return "full";
  }
  return "none";
}

std::string evaluate_config_text(const EvaluateOptions& o) {
  std::ostringstream out;
  out << "evaluate model=" << model_name(o.model) << " repeats=" << o.repeats
      << " baseline=" << baseline_name(o.baseline)
      << " epochs=" << o.train.epochs << " lr=" << fmt_double(o.train.lr)
      << " weight_decay=" << fmt_double(o.train.weight_decay)
      << " d_token=" << o.train.d_token << " hidden=" << o.train.hidden
      << " layers=" << o.train.layers << " seed=" << o.train.seed
      << " timing=" << (o.timing ? 1 : 0);
  return out.str();
}

Split eval_split(const RdbInstance& rdb) {
  if (!rdb.rows_in_split(Split::kTest).empty()) return Split::kTest;
  if (!rdb.rows_in_split(Split::kVal).empty()) return Split::kVal;
  throw ValidationError("target table has no held-out rows to evaluate on");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

}  // namespace

StageStatus ingest_stage(const std::string& schema_path,
                         const std::string& data_dir,
                         const std::string& workspace) {
  std::error_code ec;
  fs::create_directories(workspace, ec);
  if (ec) throw ValidationError("cannot create " + workspace);

  const Schema schema = parse_schema_file(schema_path);
  std::vector<std::string> inputs{schema_path};
  for (const TableSpec& table : schema.tables)
    inputs.push_back((fs::path(data_dir) / (table.name + ".csv")).string());
  const std::uint64_t print = stage_fingerprint(inputs, "ingest");

  StageStatus status;
  if (stage_unchanged(workspace, "ingest", print, {"rdb.bin"})) {
    status.skipped = true;
    return status;
  }
  LoadReport report;
  RdbInstance rdb = load_rdb_dir(schema, data_dir, &report);
  normalize(rdb);
  save_rdb_file(rdb, ws_file(workspace, "rdb.bin"));
  store_hash(workspace, "ingest", print);
  status.notes = report.warnings;
  if (report.total_dropped > 0)
    status.notes.push_back("dropped " + std::to_string(report.total_dropped) +
                           " rows with unresolvable keys");
  return status;
}

void save_pretrain_snapshot(const PretrainSnapshot& snap,
                            const std::string& path) {
  ByteWriter out;
  out.bytes("T2GP", 4);
  out.u32(1);
  out.u64(snap.schema_fingerprint);
  out.u64(snap.seed);
  out.f64(snap.ratio);
  write_bank(snap.bank, out);
  out.u32(static_cast<std::uint32_t>(snap.pseudo.assignments.size()));
  for (size_t t = 0; t < snap.pseudo.assignments.size(); ++t) {
    out.u32(static_cast<std::uint32_t>(snap.pseudo.counts[t]));
    out.u64(snap.pseudo.assignments[t].size());
    for (int a : snap.pseudo.assignments[t])
      out.u32(static_cast<std::uint32_t>(a));
  }
  out.u64(snap.loss_curve.size());
  for (double v : snap.loss_curve) out.f64(v);
  spill(path, out.data());
}

PretrainSnapshot load_pretrain_snapshot(const std::string& path) {
  const std::string bytes = slurp(path);
  ByteReader in(bytes);
  char magic[4];
  in.raw(magic, 4);
  if (std::string_view(magic, 4) != "T2GP")
    throw ValidationError(path + " is not a pretraining snapshot");
  if (in.u32() != 1)
    throw ValidationError(path + " has an unsupported snapshot version");
  PretrainSnapshot snap;
  snap.schema_fingerprint = in.u64();
  snap.seed = in.u64();
  snap.ratio = in.f64();
  snap.bank = read_bank(in);
  const std::uint32_t n_tables = in.u32();
  for (std::uint32_t t = 0; t < n_tables; ++t) {
    snap.pseudo.counts.push_back(static_cast<int>(in.u32()));
    std::vector<int> assign(in.u64());
    for (int& a : assign) a = static_cast<int>(in.u32());
    snap.pseudo.assignments.push_back(std::move(assign));
  }
  snap.loss_curve.resize(in.u64());
  for (double& v : snap.loss_curve) v = in.f64();
  if (!in.exhausted())
    throw ValidationError(path + " has trailing bytes");
  return snap;
}

StageStatus pretrain_stage(const std::string& workspace,
                           const PretrainConfig& cfg) {
  require_stage_file(workspace, "rdb.bin", "ingest");
  const std::string rdb_path = ws_file(workspace, "rdb.bin");
  const std::uint64_t print =
      stage_fingerprint({rdb_path}, pretrain_config_text(cfg));

  StageStatus status;
  if (stage_unchanged(workspace, "pretrain", print, {"pretrain.bin"})) {
    status.skipped = true;
    return status;
  }
  const RdbInstance rdb = load_rdb_file(rdb_path);
  const Reg reg = build_reg(rdb);
  const PretrainResult result = pretrain(rdb, reg, cfg);

  PretrainSnapshot snap;
  snap.schema_fingerprint = schema_fingerprint(rdb.schema);
  snap.seed = cfg.seed;
  snap.ratio = cfg.ratio;
  snap.bank = result.bank;
  snap.pseudo.assignments = result.pseudo.assignments;
  snap.pseudo.counts = result.pseudo.counts;
  snap.loss_curve = result.loss_curve;
  save_pretrain_snapshot(snap, ws_file(workspace, "pretrain.bin"));
  store_hash(workspace, "pretrain", print);

  std::ostringstream note;
  note << "clusters per table:";
  for (int c : snap.pseudo.counts) note << ' ' << c;
  status.notes.push_back(note.str());
  if (!snap.loss_curve.empty())
    status.notes.push_back("final pretraining loss " +
                           std::to_string(snap.loss_curve.back()));
  return status;
}

StageStatus distill_stage(const std::string& workspace,
                          const DistillStageConfig& cfg) {
  require_stage_file(workspace, "rdb.bin", "ingest");
  require_stage_file(workspace, "pretrain.bin", "pretrain");
  const std::string rdb_path = ws_file(workspace, "rdb.bin");
  const std::string snap_path = ws_file(workspace, "pretrain.bin");
  const std::string config_text = distill_config_text(cfg);
  const std::uint64_t print =
      stage_fingerprint({rdb_path, snap_path}, config_text);

  StageStatus status;
  if (stage_unchanged(workspace, "distill",
                      print, {"artifact.t2g", "distill_loss.csv"})) {
    status.skipped = true;
    return status;
  }
  const RdbInstance rdb = load_rdb_file(rdb_path);
  const PretrainSnapshot snap = load_pretrain_snapshot(snap_path);
  if (snap.schema_fingerprint != schema_fingerprint(rdb.schema))
    throw ValidationError("pretrain.bin was produced from a different schema");

  const Reg reg = build_reg(rdb);
  const SyntheticStructure structure =
      build_structure(reg, snap.pseudo, cfg.rho);
  const DistillResult result = run_distillation(
      rdb, reg, snap.bank, snap.pseudo, structure, cfg.distill);
  const DistillProblem problem = make_problem(rdb, reg, snap.bank, snap.pseudo);

  DistillationArtifact artifact;
  artifact.schema_fingerprint = snap.schema_fingerprint;
  artifact.seed = cfg.distill.seed;
  artifact.config_hash = fnv1a64(config_text);
  artifact.schema = rdb.schema;
  artifact.bank = snap.bank;
  artifact.structure = result.graph.structure;
  artifact.h = result.graph.h;
  artifact.y = result.graph.y;
  artifact.label_mean = problem.label_mean;
  artifact.label_std = problem.label_std;
  save_artifact(artifact, ws_file(workspace, "artifact.t2g"));
  spill(ws_file(workspace, "distill_loss.csv"), loss_log_csv(result.loss_log));
  store_hash(workspace, "distill", print);

  for (const std::string& warning : structure.warnings)
    status.notes.push_back(warning);
  if (!result.loss_log.empty())
    status.notes.push_back(
        "final losses: task " + std::to_string(result.loss_log.back().task) +
        ", pseudo " + std::to_string(result.loss_log.back().pseudo));
  return status;
}

EvaluateResult evaluate_stage(const std::string& workspace,
                              const EvaluateOptions& opt) {
  if (opt.repeats < 1) throw ValidationError("repeats must be positive");
  require_stage_file(workspace, "rdb.bin", "ingest");
  require_stage_file(workspace, "artifact.t2g", "distill");
  const std::string rdb_path = ws_file(workspace, "rdb.bin");
  const std::string artifact_path = ws_file(workspace, "artifact.t2g");
  const std::string config_text = evaluate_config_text(opt);
  const std::string out_name = std::string("eval_") + model_name(opt.model) +
                               "_" + baseline_name(opt.baseline) + ".csv";

  const std::uint64_t print =
      stage_fingerprint({rdb_path, artifact_path}, config_text);
  EvaluateResult result;
  if (stage_unchanged(workspace, "eval_" + std::string(model_name(opt.model)) +
                                     "_" + baseline_name(opt.baseline),
                      print, {out_name})) {
    result.status.skipped = true;
    return result;
  }

  const RdbInstance rdb = load_rdb_file(rdb_path);
  const DistillationArtifact artifact = load_artifact(artifact_path);
  if (artifact.schema_fingerprint != schema_fingerprint(rdb.schema))
    throw ValidationError("artifact was distilled from a different schema");

  const Reg reg = build_reg(rdb);
  const Split split = eval_split(rdb);
  const int target = rdb.target_index();
  const Task task = rdb.schema.task;
  const std::string metric = task == Task::kClassification ? "AUC" : "MAE";
  const std::int64_t n_train =
      static_cast<std::int64_t>(rdb.rows_in_split(Split::kTrain).size());
  if (n_train == 0) throw ValidationError("no training rows to evaluate with");

  std::int64_t rows_original = 0;
  for (const TableData& table : rdb.tables) rows_original += table.rows();
  const std::vector<int>& counts = artifact.structure.graph.node_counts;
  std::int64_t rows_synthetic = 0;
  for (int c : counts) rows_synthetic += c;
  const double r =
      static_cast<double>(counts[target]) / static_cast<double>(n_train);

  SyntheticGraph graph{artifact.structure, artifact.h, artifact.y};

  std::vector<double> t2g_scores, base_scores;
  std::int64_t base_rows = 0;
  double t2g_seconds = 0.0, base_seconds = 0.0;
  for (int rep = 0; rep < opt.repeats; ++rep) {
    EvalConfig train = opt.train;
    train.seed = Rng::mix(opt.train.seed, 100 + static_cast<std::uint64_t>(rep));
    auto start = std::chrono::steady_clock::now();
    const DownstreamModel model =
        train_downstream(graph, target, task, artifact.label_mean,
                         artifact.label_std, opt.model, train);
    t2g_seconds += seconds_since(start);
    t2g_scores.push_back(evaluate_model(model, artifact.bank, rdb, reg, split));

    if (opt.baseline == BaselineKind::kNone) continue;
    train.seed = Rng::mix(opt.train.seed, 200 + static_cast<std::uint64_t>(rep));
    const Subsample sample = opt.baseline == BaselineKind::kRandom
                                 ? random_baseline(rdb, reg, r, train.seed)
                                 : full_sample(rdb, reg);
    base_rows = 0;
    for (const std::vector<int>& rows : sample.rows)
      base_rows += static_cast<std::int64_t>(rows.size());
    start = std::chrono::steady_clock::now();
    const SupervisedModel supervised = train_supervised(rdb, sample, opt.model, train);
    base_seconds += seconds_since(start);
    base_scores.push_back(
        evaluate_model(supervised.model, supervised.bank, rdb, reg, split));
  }

  const auto [t2g_mean, t2g_std] = mean_std(t2g_scores);
  EvalReport t2g_report;
  t2g_report.config = std::string("t2g-") + model_name(opt.model);
  t2g_report.metric = metric;
  t2g_report.mean = t2g_mean;
  t2g_report.stddev = t2g_std;
  t2g_report.r = r;
  t2g_report.train_seconds = opt.timing ? t2g_seconds / opt.repeats : 0.0;
  t2g_report.rows_synthetic = rows_synthetic;
  t2g_report.rows_original = rows_original;
  result.reports.push_back(t2g_report);

  if (opt.baseline != BaselineKind::kNone) {
    const auto [base_mean, base_std] = mean_std(base_scores);
    EvalReport base_report;
    base_report.config = std::string(baseline_name(opt.baseline)) + "-" +
                         model_name(opt.model);
    base_report.metric = metric;
    base_report.mean = base_mean;
    base_report.stddev = base_std;
    base_report.r = opt.baseline == BaselineKind::kFull
                        ? 1.0
                        : static_cast<double>(base_rows) /
                              static_cast<double>(rows_original);
    base_report.train_seconds = opt.timing ? base_seconds / opt.repeats : 0.0;
    base_report.rows_synthetic = base_rows;
    base_report.rows_original = rows_original;
    result.reports.push_back(base_report);
  }

  spill(ws_file(workspace, out_name), report_csv(result.reports));
  store_hash(workspace,
             "eval_" + std::string(model_name(opt.model)) + "_" +
                 baseline_name(opt.baseline),
             print);
  result.status.notes.push_back(out_name + ": " + metric + " " +
                                std::to_string(t2g_mean));
  return result;
}

StageStatus report_stage(const std::string& workspace) {
  std::vector<std::string> names;
  for (const fs::directory_entry& entry : fs::directory_iterator(workspace)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("eval_") && name.ends_with(".csv"))
      names.push_back(name);
  }
  if (names.empty())
    throw ValidationError("no eval_*.csv in " + workspace +
                          "; run evaluate first");
  std::sort(names.begin(), names.end());

  const std::uint64_t print = stage_fingerprint(
      [&] {
        std::vector<std::string> paths;
        for (const std::string& name : names)
          paths.push_back(ws_file(workspace, name));
        return paths;
      }(),
      "report");
  StageStatus status;
  if (stage_unchanged(workspace, "report", print, {"report.csv"})) {
    status.skipped = true;
    return status;
  }

  std::string merged;
  for (const std::string& name : names) {
    const std::string text = slurp(ws_file(workspace, name));
    const size_t eol = text.find('\n');
    if (eol == std::string::npos)
      throw ValidationError(name + " has no header row");
    if (merged.empty()) merged = text.substr(0, eol + 1);
    merged += text.substr(eol + 1);
  }
  spill(ws_file(workspace, "report.csv"), merged);
  store_hash(workspace, "report", print);
  for (const std::string& name : names) status.notes.push_back("merged " + name);
  return status;
}

}  // namespace t2g
