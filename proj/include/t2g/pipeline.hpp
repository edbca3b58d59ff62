#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2g/distill.hpp"
#include "t2g/eval.hpp"
#include "t2g/pretrain.hpp"
#include "t2g/rdb.hpp"

namespace t2g {

// Workspace layout: rdb.bin, pretrain.bin, artifact.t2g, distill_loss.csv,
// eval_<model>_<baseline>.csv, report.csv, plus one .hash file per stage.
// A stage whose inputs and config hash to the stored value is skipped.

struct StageStatus {
  bool skipped = false;
  std::vector<std::string> notes;
};

StageStatus ingest_stage(const std::string& schema_path,
                         const std::string& data_dir,
                         const std::string& workspace);

StageStatus pretrain_stage(const std::string& workspace,
                           const PretrainConfig& cfg);

struct DistillStageConfig {
  DistillConfig distill;
  double rho = 0.5;
};

StageStatus distill_stage(const std::string& workspace,
                          const DistillStageConfig& cfg);

enum class BaselineKind { kNone, kRandom, kFull };

struct EvaluateOptions {
  ModelKind model = ModelKind::kHgnn;
  int repeats = 5;
  BaselineKind baseline = BaselineKind::kRandom;
  EvalConfig train;
  bool timing = true;  // false zeroes train_seconds for stable output bytes
};

struct EvaluateResult {
  StageStatus status;
  std::vector<EvalReport> reports;
};

EvaluateResult evaluate_stage(const std::string& workspace,
                              const EvaluateOptions& opt);

// Merges every eval_*.csv into report.csv.
StageStatus report_stage(const std::string& workspace);

// Intermediate pretraining output persisted between stages.
struct PretrainSnapshot {
  std::uint64_t schema_fingerprint = 0;
  std::uint64_t seed = 0;
  double ratio = 0.0;
  TokenizerBank bank;
  PseudoLabels pseudo;  // centroids omitted
  std::vector<double> loss_curve;
};

void save_pretrain_snapshot(const PretrainSnapshot& snap,
                            const std::string& path);
PretrainSnapshot load_pretrain_snapshot(const std::string& path);

}  // namespace t2g
