#include "t2g/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "t2g/errors.hpp"
#include "t2g/rng.hpp"
#include "t2g/stats.hpp"

namespace t2g {

namespace {

Mat uniform_mat(int rows, int cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i)
    m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Reg edgeless_twin(const std::vector<int>& node_counts) {
  Reg reg;
  reg.node_counts = node_counts;
  return reg;
}

Mat row_softmax(const Mat& logits) {
  Mat probs(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (int j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (int j = 0; j < logits.cols(); ++j) {
      probs(i, j) = std::exp(logits(i, j) - mx);
      sum += probs(i, j);
    }
    for (int j = 0; j < logits.cols(); ++j) probs(i, j) /= sum;
  }
  return probs;
}

struct Head {
  Mat w, b;
};

Head init_head(int hidden, int width, std::uint64_t seed) {
  Rng rng(seed);
  Head head;
  head.w = uniform_mat(hidden, width, 1.0 / std::sqrt(hidden), rng);
  head.b = Mat(1, width);
  return head;
}

void check_eval_config(const EvalConfig& cfg) {
  if (cfg.epochs < 1) throw ValidationError("training needs at least one epoch");
  if (!(cfg.lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (cfg.hidden < 1) throw ValidationError("hidden width must be positive");
}

}  // namespace

double mae(const std::vector<double>& pred, const std::vector<double>& want) {
  if (pred.size() != want.size() || pred.empty())
    throw ValidationError("MAE needs two equal-length non-empty vectors");
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - want[i]);
  return s / static_cast<double>(pred.size());
}

double roc_auc(const std::vector<double>& scores,
               const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ValidationError("AUC needs aligned scores and labels");
  std::int64_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("AUC labels must be 0 or 1");
    pos += y;
  }
  const std::int64_t neg = static_cast<std::int64_t>(labels.size()) - pos;
  if (pos == 0 || neg == 0)
    throw ValidationError("AUC undefined with a single class");

  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] > scores[b]; });

  double area = 0.0;
  std::int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    std::int64_t dtp = 0, dfp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) ++dtp;
      else ++dfp;
      ++j;
    }
    area += static_cast<double>(dfp) * (static_cast<double>(tp) + 0.5 * dtp);
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

double macro_ovr_auc(const Mat& probs, const std::vector<int>& labels) {
  if (static_cast<size_t>(probs.rows()) != labels.size() || probs.rows() == 0)
    throw ValidationError("AUC needs aligned scores and labels");
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < probs.cols(); ++c) {
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    std::int64_t pos = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      scores[i] = probs(static_cast<int>(i), c);
      binary[i] = labels[i] == c ? 1 : 0;
      pos += binary[i];
    }
    if (pos == 0 || pos == static_cast<std::int64_t>(labels.size())) continue;
    sum += roc_auc(scores, binary);
    ++used;
  }
  if (used == 0) throw ValidationError("AUC undefined with a single class");
  return sum / used;
}

Mat soft_targets(const Mat& y) {
  Mat out(y.rows(), y.cols());
  for (int i = 0; i < y.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < y.cols(); ++j) {
      out(i, j) = std::max(0.0, y(i, j));
      sum += out(i, j);
    }
    if (sum > 1e-12) {
      for (int j = 0; j < y.cols(); ++j) out(i, j) /= sum;
    } else {
      for (int j = 0; j < y.cols(); ++j) out(i, j) = 1.0 / y.cols();
    }
  }
  return out;
}

DownstreamModel train_downstream(const SyntheticGraph& graph, int target_table,
                                 Task task, double label_mean,
                                 double label_std, ModelKind kind,
                                 const EvalConfig& cfg) {
  check_eval_config(cfg);
  const std::vector<int>& counts = graph.structure.graph.node_counts;
  const int n_tables = static_cast<int>(counts.size());
  if (target_table < 0 || target_table >= n_tables)
    throw ValidationError("target table out of range");
  if (graph.h.size() != static_cast<size_t>(n_tables) || graph.h.empty())
    throw ValidationError("synthetic graph is missing feature tables");
  const int d_in = graph.h[0].cols();
  const int width = graph.y.cols();
  const int layers = cfg.layers > 0 ? cfg.layers : n_tables;

  DownstreamModel model;
  model.kind = kind;
  model.task = task;
  model.target_table = target_table;
  model.label_mean = label_mean;
  model.label_std = label_std;

  const Reg twin = edgeless_twin(counts);
  const Reg& topo = kind == ModelKind::kMlp ? twin : graph.structure.graph;
  const int n_rel = static_cast<int>(topo.relations.size());
  model.params = init_hgnn(Rng::mix(cfg.seed, 31), n_tables, n_rel, layers,
                           d_in, cfg.hidden);
  Head head = init_head(cfg.hidden, width, Rng::mix(cfg.seed, 32));

  const Mat targets =
      task == Task::kClassification ? soft_targets(graph.y) : graph.y;
  const double inv_n = 1.0 / static_cast<double>(graph.y.rows());

  model.loss_curve.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    const BoundHgnn bound = bind_hgnn(tape, model.params, true);
    const int w_id = tape.leaf(head.w, true);
    const int b_id = tape.leaf(head.b, true);
    std::vector<int> feats;
    feats.reserve(graph.h.size());
    for (const Mat& h : graph.h) feats.push_back(tape.leaf(h));
    const std::vector<int> z =
        hgnn_forward(tape, bound, model.params, view_of(topo), feats);
    const int logits = tape.add_row_broadcast(
        tape.matmul(z[target_table], w_id), b_id);
    const int loss =
        task == Task::kClassification
            ? tape.soft_cross_entropy(logits, targets)
            : tape.scale(tape.frob_sq(tape.sub(tape.leaf(targets), logits)),
                         inv_n);
    const double value = tape.value(loss)(0, 0);
    if (!std::isfinite(value))
      throw NumericalError("downstream training diverged at epoch " +
                           std::to_string(epoch));
    model.loss_curve.push_back(value);
    tape.backward(loss);
    hgnn_sgd_step(model.params, tape, bound, cfg.lr, cfg.weight_decay);
    if (!tape.grad(w_id).empty())
      sgd_step(head.w, tape.grad(w_id), cfg.lr, cfg.weight_decay);
    if (!tape.grad(b_id).empty())
      sgd_step(head.b, tape.grad(b_id), cfg.lr, cfg.weight_decay);
  }
  model.head_w = head.w;
  model.head_b = head.b;
  return model;
}

Subsample random_baseline(const RdbInstance& rdb, const Reg& reg, double r,
                          std::uint64_t seed) {
  if (!(r > 0.0) || !(r < 1.0))
    throw ValidationError("sampling ratio must lie in (0,1)");
  const int tgt = rdb.target_index();
  Rng rng(seed);
  Subsample out;
  out.rows.resize(reg.node_counts.size());
  for (size_t t = 0; t < reg.node_counts.size(); ++t) {
    std::vector<int> pool;
    if (static_cast<int>(t) == tgt) {
      pool = rdb.rows_in_split(Split::kTrain);
    } else {
      pool.resize(reg.node_counts[t]);
      std::iota(pool.begin(), pool.end(), 0);
    }
    if (pool.empty())
      throw ValidationError("table " + std::to_string(t) +
                            " has no rows to sample");
    const int k = std::min<int>(
        static_cast<int>(pool.size()),
        static_cast<int>(std::ceil(r * static_cast<double>(pool.size()))));
    for (int i = 0; i < k; ++i) {
      const int j = i + rng.uniform_int(static_cast<int>(pool.size()) - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    out.rows[t] = std::move(pool);
  }

  out.graph.relations = reg.relations;
  out.graph.adjacency.resize(reg.relations.size());
  for (size_t t = 0; t < out.rows.size(); ++t)
    out.graph.node_counts.push_back(static_cast<int>(out.rows[t].size()));

  std::vector<std::vector<int>> remap(reg.node_counts.size());
  for (size_t t = 0; t < out.rows.size(); ++t) {
    remap[t].assign(reg.node_counts[t], -1);
    for (size_t i = 0; i < out.rows[t].size(); ++i)
      remap[t][out.rows[t][i]] = static_cast<int>(i);
  }
  for (size_t k = 0; k < reg.relations.size() / 2; ++k) {
    const RelationType& rel = reg.relations[2 * k];
    const CsrAdj& adj = reg.adjacency[2 * k];
    std::vector<std::pair<int, int>> edges;
    for (int w = 0; w < adj.num_dst; ++w) {
      const int new_w = remap[rel.dst_table][w];
      if (new_w < 0) continue;
      for (std::int64_t e = adj.offsets[w]; e < adj.offsets[w + 1]; ++e) {
        const int new_v = remap[rel.src_table][adj.srcs[e]];
        if (new_v >= 0) edges.emplace_back(new_v, new_w);
      }
    }
    out.graph.adjacency[2 * k] = csr_from_edges(
        out.graph.node_counts[rel.src_table],
        out.graph.node_counts[rel.dst_table], edges);
    out.graph.adjacency[2 * k + 1] = csr_transpose(out.graph.adjacency[2 * k]);
  }
  return out;
}

Subsample full_sample(const RdbInstance& rdb, const Reg& reg) {
  (void)rdb;
  Subsample out;
  out.graph = reg;
  out.rows.resize(reg.node_counts.size());
  for (size_t t = 0; t < out.rows.size(); ++t) {
    out.rows[t].resize(reg.node_counts[t]);
    std::iota(out.rows[t].begin(), out.rows[t].end(), 0);
  }
  return out;
}

SupervisedModel train_supervised(const RdbInstance& rdb,
                                 const Subsample& sample, ModelKind kind,
                                 const EvalConfig& cfg) {
  check_eval_config(cfg);
  const int tgt = rdb.target_index();
  const int n_tables = static_cast<int>(sample.rows.size());

  // positions of labeled rows within the target subset
  std::vector<int> sup_pos;
  std::vector<int> sup_rows;
  for (size_t i = 0; i < sample.rows[tgt].size(); ++i) {
    const int row = sample.rows[tgt][i];
    if (rdb.splits[row] == Split::kTrain) {
      sup_pos.push_back(static_cast<int>(i));
      sup_rows.push_back(row);
    }
  }
  if (sup_pos.empty())
    throw ValidationError("sample holds no training-split target rows");

  SupervisedModel out;
  out.bank = init_bank(rdb, cfg.d_token, Rng::mix(cfg.seed, 21));
  DownstreamModel& model = out.model;
  model.kind = kind;
  model.task = rdb.schema.task;
  model.target_table = tgt;

  const int width =
      model.task == Task::kClassification ? rdb.schema.num_classes : 1;
  std::vector<int> class_targets;
  Mat reg_targets;
  if (model.task == Task::kClassification) {
    for (int row : sup_rows) class_targets.push_back(rdb.class_labels[row]);
  } else {
    std::vector<double> raw;
    for (int row : sup_rows) raw.push_back(rdb.labels[row]);
    model.label_mean = mean_of(raw);
    const double var = population_variance(raw);
    model.label_std = var > 0.0 ? std::sqrt(var) : 1.0;
    reg_targets = Mat(static_cast<int>(raw.size()), 1);
    for (size_t i = 0; i < raw.size(); ++i)
      reg_targets(static_cast<int>(i), 0) =
          (raw[i] - model.label_mean) / model.label_std;
  }

  const int layers = cfg.layers > 0 ? cfg.layers : n_tables;
  const Reg twin = edgeless_twin(sample.graph.node_counts);
  const Reg& topo = kind == ModelKind::kMlp ? twin : sample.graph;
  model.params = init_hgnn(Rng::mix(cfg.seed, 31), n_tables,
                           static_cast<int>(topo.relations.size()), layers,
                           cfg.d_token, cfg.hidden);
  Head head = init_head(cfg.hidden, width, Rng::mix(cfg.seed, 32));
  const double inv_n = 1.0 / static_cast<double>(sup_pos.size());

  model.loss_curve.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    const BoundBank bound_bank = bind_bank(tape, out.bank, true);
    const std::vector<int> encoded = encode_all(tape, bound_bank, out.bank, rdb);
    std::vector<int> feats(n_tables);
    for (int t = 0; t < n_tables; ++t)
      feats[t] = tape.row_gather(encoded[t], sample.rows[t]);
    const BoundHgnn bound = bind_hgnn(tape, model.params, true);
    const int w_id = tape.leaf(head.w, true);
    const int b_id = tape.leaf(head.b, true);
    const std::vector<int> z =
        hgnn_forward(tape, bound, model.params, view_of(topo), feats);
    const int z_sup = tape.row_gather(z[tgt], sup_pos);
    const int logits =
        tape.add_row_broadcast(tape.matmul(z_sup, w_id), b_id);
    const int loss =
        model.task == Task::kClassification
            ? tape.softmax_cross_entropy(logits, class_targets)
            : tape.scale(
                  tape.frob_sq(tape.sub(tape.leaf(reg_targets), logits)),
                  inv_n);
    const double value = tape.value(loss)(0, 0);
    if (!std::isfinite(value))
      throw NumericalError("supervised training diverged at epoch " +
                           std::to_string(epoch));
    model.loss_curve.push_back(value);
    tape.backward(loss);
    bank_sgd_step(out.bank, tape, bound_bank, cfg.lr, cfg.weight_decay);
    hgnn_sgd_step(model.params, tape, bound, cfg.lr, cfg.weight_decay);
    if (!tape.grad(w_id).empty())
      sgd_step(head.w, tape.grad(w_id), cfg.lr, cfg.weight_decay);
    if (!tape.grad(b_id).empty())
      sgd_step(head.b, tape.grad(b_id), cfg.lr, cfg.weight_decay);
  }
  model.head_w = head.w;
  model.head_b = head.b;
  return out;
}

double evaluate_model(const DownstreamModel& model, const TokenizerBank& bank,
                      const RdbInstance& rdb, const Reg& reg, Split split) {
  const std::vector<int> rows = rdb.rows_in_split(split);
  if (rows.empty()) throw ValidationError("evaluation split has no rows");

  Tape tape;
  const BoundBank bound_bank = bind_bank(tape, bank, false);
  const std::vector<int> feats = encode_all(tape, bound_bank, bank, rdb);
  const Reg twin = edgeless_twin(reg.node_counts);
  const Reg& topo = model.kind == ModelKind::kMlp ? twin : reg;
  const BoundHgnn bound = bind_hgnn(tape, model.params, false);
  const std::vector<int> z =
      hgnn_forward(tape, bound, model.params, view_of(topo), feats);
  const int logits_id = tape.add_row_broadcast(
      tape.matmul(tape.row_gather(z[model.target_table], rows),
                  tape.leaf(model.head_w)),
      tape.leaf(model.head_b));
  const Mat& logits = tape.value(logits_id);

  if (model.task == Task::kRegression) {
    std::vector<double> pred(rows.size()), want(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      pred[i] = logits(static_cast<int>(i), 0) * model.label_std +
                model.label_mean;
      want[i] = rdb.labels[rows[i]];
    }
    return mae(pred, want);
  }
  const Mat probs = row_softmax(logits);
  std::vector<int> labels(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) labels[i] = rdb.class_labels[rows[i]];
  if (probs.cols() == 2) {
    std::vector<double> scores(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) scores[i] = probs(static_cast<int>(i), 1);
    return 100.0 * roc_auc(scores, labels);
  }
  return 100.0 * macro_ovr_auc(probs, labels);
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  return {m, std::sqrt(population_variance(xs))};
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::string out =
      "config,metric,mean,std,r,train_seconds,rows_synthetic,rows_original\n";
  char line[256];
  for (const EvalReport& rep : reports) {
    std::snprintf(line, sizeof(line), "%s,%s,%.6g,%.6g,%.6g,%.3f,%lld,%lld\n",
                  rep.config.c_str(), rep.metric.c_str(), rep.mean, rep.stddev,
                  rep.r, rep.train_seconds,
                  static_cast<long long>(rep.rows_synthetic),
                  static_cast<long long>(rep.rows_original));
    out += line;
  }
  return out;
}

}  // namespace t2g
