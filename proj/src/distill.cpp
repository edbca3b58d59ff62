#include "t2g/distill.hpp"

#include <cmath>
#include <cstdio>

#include "t2g/errors.hpp"
#include "t2g/rng.hpp"
#include "t2g/stats.hpp"

namespace t2g {

namespace {

struct Recorded {
  std::vector<int> h_ids;
  int y_id = -1;
  int task = -1;
  int pseudo = -1;
  int total = -1;
};

Recorded record_losses(Tape& tape, const DistillProblem& problem,
                       const SyntheticStructure& structure,
                       const HgnnParams& theta, const SyntheticGraph& graph,
                       double beta, double lambda, bool trainable,
                       bool include_pseudo) {
  const Reg& reg = *problem.reg;
  const size_t n_tables = reg.node_counts.size();
  if (graph.h.size() != n_tables)
    throw ValidationError("synthetic features cover " +
                          std::to_string(graph.h.size()) + " tables, expected " +
                          std::to_string(n_tables));
  const std::vector<int>& counts = structure.graph.node_counts;
  for (size_t t = 0; t < n_tables; ++t)
    if (graph.h[t].rows() != counts[t] || graph.h[t].cols() != theta.d_in)
      throw ValidationError("synthetic features for table " +
                            std::to_string(t) + " have the wrong shape");
  const int n_syn = counts[problem.target_table];
  if (graph.y.rows() != n_syn || graph.y.cols() != problem.label_dim())
    throw ValidationError("synthetic labels have the wrong shape");

  Recorded rec;
  const BoundHgnn bound = bind_hgnn(tape, theta, false);

  std::vector<int> feat_ids;
  feat_ids.reserve(n_tables);
  for (const Mat& f : problem.features) feat_ids.push_back(tape.leaf(f));
  for (const Mat& h : graph.h) rec.h_ids.push_back(tape.leaf(h, trainable));
  rec.y_id = tape.leaf(graph.y, trainable);

  const std::vector<int> z_orig =
      hgnn_forward(tape, bound, theta, view_of(reg), feat_ids);
  const std::vector<int> z_syn = hgnn_forward(
      tape, bound, theta, view_of(structure.graph), rec.h_ids);

  const int z_train =
      tape.row_gather(z_orig[problem.target_table], problem.train_rows);
  const int z_tgt = z_syn[problem.target_table];
  const double inv_n = 1.0 / static_cast<double>(problem.train_rows.size());

  const int w_task = krr_solve(tape, z_tgt, rec.y_id, lambda);
  rec.task = tape.scale(
      tape.frob_sq(tape.sub(tape.leaf(problem.y_train),
                            tape.matmul(z_train, w_task))),
      inv_n);
  if (include_pseudo) {
    const int eye = tape.leaf(Mat::identity(n_syn));
    const int w_pseudo = krr_solve(tape, z_tgt, eye, lambda);
    rec.pseudo = tape.scale(
        tape.frob_sq(tape.sub(tape.leaf(problem.pseudo_train),
                              tape.matmul(z_train, w_pseudo))),
        inv_n);
    rec.total = tape.add(rec.task, tape.scale(rec.pseudo, beta));
  } else {
    rec.total = rec.task;
  }
  return rec;
}

LossBreakdown breakdown_of(const Tape& tape, const Recorded& rec) {
  LossBreakdown out;
  out.task = tape.value(rec.task)(0, 0);
  out.pseudo = rec.pseudo >= 0 ? tape.value(rec.pseudo)(0, 0) : 0.0;
  out.total = tape.value(rec.total)(0, 0);
  return out;
}

void check_config(const DistillConfig& cfg) {
  if (cfg.iterations < 0)
    throw ValidationError("iteration count must be non-negative");
  if (!(cfg.lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(cfg.lambda > 0.0))
    throw ValidationError("ridge coefficient must be positive");
  if (cfg.beta < 0.0)
    throw ValidationError("pseudo-loss weight must be non-negative");
  if (!cfg.theta_seeds.empty() &&
      cfg.theta_seeds.size() < static_cast<size_t>(cfg.iterations))
    throw ValidationError("need one encoder seed per iteration");
}

Mat init_labels(const RdbInstance& rdb, const PseudoLabels& pseudo,
                const DistillProblem& problem, int n_syn) {
  const int tgt = problem.target_table;
  const std::vector<int>& assign = pseudo.assignments[tgt];
  Mat y(n_syn, problem.label_dim());
  if (rdb.schema.task == Task::kClassification) {
    std::vector<int> cluster_class(n_syn, -1);
    for (size_t i = 0; i < problem.train_rows.size(); ++i) {
      const int row = problem.train_rows[i];
      const int cluster = assign[row];
      const int klass = rdb.class_labels[row];
      if (cluster_class[cluster] == -1) cluster_class[cluster] = klass;
      else if (cluster_class[cluster] != klass)
        throw ValidationError("target cluster " + std::to_string(cluster) +
                              " mixes classes");
    }
    for (int a = 0; a < n_syn; ++a) {
      if (cluster_class[a] == -1)
        throw ValidationError("target cluster " + std::to_string(a) +
                              " has no training rows");
      y(a, cluster_class[a]) = 1.0;
    }
  } else {
    std::vector<double> sum(n_syn, 0.0);
    std::vector<int> count(n_syn, 0);
    for (size_t i = 0; i < problem.train_rows.size(); ++i) {
      const int row = problem.train_rows[i];
      sum[assign[row]] += problem.y_train(static_cast<int>(i), 0);
      ++count[assign[row]];
    }
    for (int a = 0; a < n_syn; ++a) {
      if (count[a] == 0)
        throw ValidationError("target cluster " + std::to_string(a) +
                              " has no training rows");
      y(a, 0) = sum[a] / count[a];
    }
  }
  return y;
}

}  // namespace

DistillProblem make_problem(const RdbInstance& rdb, const Reg& reg,
                            const TokenizerBank& bank,
                            const PseudoLabels& pseudo) {
  DistillProblem problem;
  problem.reg = &reg;
  problem.target_table = rdb.target_index();
  problem.train_rows = rdb.rows_in_split(Split::kTrain);
  const int n_train = static_cast<int>(problem.train_rows.size());
  if (n_train == 0)
    throw ValidationError("target table has no training rows to distill from");

  Tape tape;
  const BoundBank bound = bind_bank(tape, bank, false);
  const std::vector<int> encoded = encode_all(tape, bound, bank, rdb);
  problem.features.reserve(encoded.size());
  for (int id : encoded) problem.features.push_back(tape.value(id));

  if (rdb.schema.task == Task::kClassification) {
    problem.y_train = Mat(n_train, rdb.schema.num_classes);
    for (int i = 0; i < n_train; ++i)
      problem.y_train(i, rdb.class_labels[problem.train_rows[i]]) = 1.0;
  } else {
    std::vector<double> train_labels(n_train);
    for (int i = 0; i < n_train; ++i)
      train_labels[i] = rdb.labels[problem.train_rows[i]];
    problem.label_mean = mean_of(train_labels);
    const double var = population_variance(train_labels);
    problem.label_std = var > 0.0 ? std::sqrt(var) : 1.0;
    problem.y_train = Mat(n_train, 1);
    for (int i = 0; i < n_train; ++i)
      problem.y_train(i, 0) =
          (train_labels[i] - problem.label_mean) / problem.label_std;
  }

  const int tgt = problem.target_table;
  if (pseudo.assignments.size() != rdb.tables.size() ||
      pseudo.assignments[tgt].size() != rdb.target_data().rows())
    throw ValidationError("pseudo-labels do not cover the target table");
  const int n_clusters = pseudo.counts[tgt];
  problem.pseudo_train = Mat(n_train, n_clusters);
  for (int i = 0; i < n_train; ++i) {
    const int cluster = pseudo.assignments[tgt][problem.train_rows[i]];
    if (cluster < 0 || cluster >= n_clusters)
      throw ValidationError("pseudo-label out of range on the target table");
    problem.pseudo_train(i, cluster) = 1.0;
  }
  return problem;
}

int krr_solve(Tape& tape, int z, int y, double lambda) {
  if (!(lambda > 0.0))
    throw ValidationError("ridge coefficient must be positive");
  const int gram = tape.add_scaled_identity(
      tape.matmul(z, tape.transpose(z)), lambda);
  return tape.matmul(tape.transpose(z), tape.spd_solve(gram, y));
}

LossBreakdown compute_losses(const DistillProblem& problem,
                             const SyntheticGraph& graph,
                             const HgnnParams& theta, double beta,
                             double lambda) {
  Tape tape;
  const Recorded rec = record_losses(tape, problem, graph.structure, theta,
                                     graph, beta, lambda, false, true);
  return breakdown_of(tape, rec);
}

LossGrads loss_gradients(const DistillProblem& problem,
                         const SyntheticGraph& graph, const HgnnParams& theta,
                         double beta, double lambda, bool include_pseudo) {
  Tape tape;
  const Recorded rec = record_losses(tape, problem, graph.structure, theta,
                                     graph, beta, lambda, true, include_pseudo);
  tape.backward(rec.total);
  LossGrads out;
  out.loss = breakdown_of(tape, rec);
  out.h.reserve(rec.h_ids.size());
  for (int id : rec.h_ids) out.h.push_back(tape.grad(id));
  out.y = tape.grad(rec.y_id);
  return out;
}

DistillResult run_distillation(const RdbInstance& rdb, const Reg& reg,
                               const TokenizerBank& bank,
                               const PseudoLabels& pseudo,
                               const SyntheticStructure& structure,
                               const DistillConfig& cfg) {
  check_config(cfg);
  const DistillProblem problem = make_problem(rdb, reg, bank, pseudo);
  const std::vector<int>& counts = structure.graph.node_counts;
  if (counts != pseudo.counts)
    throw ValidationError(
        "synthetic structure and pseudo-labels disagree on cluster counts");

  const int n_tables = static_cast<int>(reg.node_counts.size());
  const int layers = cfg.layers > 0 ? cfg.layers : n_tables;

  DistillResult out;
  out.graph.structure = structure;
  Rng rng(Rng::mix(cfg.seed, 11));
  out.graph.h.reserve(counts.size());
  for (int count : counts) {
    Mat h(count, bank.d_token);
    for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] = rng.normal() * 0.1;
    out.graph.h.push_back(std::move(h));
  }
  out.graph.y =
      init_labels(rdb, pseudo, problem, counts[problem.target_table]);

  out.loss_log.reserve(cfg.iterations);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const std::uint64_t theta_seed =
        cfg.theta_seeds.empty() ? Rng::mix(cfg.seed, 1000 + iter)
                                : cfg.theta_seeds[iter];
    const HgnnParams theta =
        init_hgnn(theta_seed, n_tables, static_cast<int>(reg.relations.size()),
                  layers, bank.d_token, cfg.hidden);
    LossGrads grads =
        loss_gradients(problem, out.graph, theta, cfg.beta, cfg.lambda);
    if (!std::isfinite(grads.loss.total))
      throw NumericalError("distillation diverged at iteration " +
                           std::to_string(iter));
    out.loss_log.push_back(grads.loss);
    for (size_t t = 0; t < out.graph.h.size(); ++t)
      if (!grads.h[t].empty())
        sgd_step(out.graph.h[t], grads.h[t], cfg.lr, 0.0);
    if (!grads.y.empty()) sgd_step(out.graph.y, grads.y, cfg.lr, 0.0);
  }
  return out;
}

std::string loss_log_csv(const std::vector<LossBreakdown>& log) {
  std::string out = "iter,L_task,L_pseudo,L_total\n";
  char line[128];
  for (size_t i = 0; i < log.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g\n", i,
                  log[i].task, log[i].pseudo, log[i].total);
    out += line;
  }
  return out;
}

}  // namespace t2g
