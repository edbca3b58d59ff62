#include "t2g/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "t2g/errors.hpp"
#include "t2g/rng.hpp"

namespace t2g {

namespace {

std::vector<double> row_norms_sq(const Mat& m) {
  std::vector<double> out(m.rows(), 0.0);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out[i] += m(i, j) * m(i, j);
  return out;
}

double dist_sq(const Mat& a, int i, const Mat& b, int j) {
  double d = 0.0;
  for (int c = 0; c < a.cols(); ++c) {
    const double diff = a(i, c) - b(j, c);
    d += diff * diff;
  }
  return d;
}

Mat uniform_mat(int rows, int cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (int i = 0; i < rows * cols; ++i)
    m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

// Nearest centroid per row, ties to the lowest cluster id.
std::vector<int> nearest_centroid(const Mat& points, const Mat& centroids) {
  const std::vector<double> pnorm = row_norms_sq(points);
  const std::vector<double> cnorm = row_norms_sq(centroids);
  const Mat g = matmul(points, transpose(centroids));
  std::vector<int> assign(points.rows());
  for (int i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = pnorm[i] + cnorm[0] - 2.0 * g(i, 0);
    for (int c = 1; c < centroids.rows(); ++c) {
      const double d = pnorm[i] + cnorm[c] - 2.0 * g(i, c);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    assign[i] = best;
  }
  return assign;
}

}  // namespace

std::vector<int> allocate_counts(const RdbInstance& rdb, double ratio,
                                 std::vector<std::string>* warnings) {
  if (ratio <= 0.0 || ratio >= 1.0)
    throw ValidationError("allocation ratio must lie in (0, 1)");
  const int tgt = rdb.target_index();
  const std::int64_t train_rows =
      static_cast<std::int64_t>(rdb.rows_in_split(Split::kTrain).size());
  std::vector<int> counts;
  bool all_floored = true;
  for (size_t t = 0; t < rdb.tables.size(); ++t) {
    const std::int64_t base = static_cast<int>(t) == tgt
                                  ? train_rows
                                  : rdb.tables[t].rows();
    const std::int64_t n = std::max<std::int64_t>(
        1, std::llround(ratio * static_cast<double>(base)));
    if (n > 1) all_floored = false;
    counts.push_back(static_cast<int>(n));
  }
  if (all_floored && warnings)
    warnings->push_back(
        "allocation ratio floors every table to one synthetic row");
  return counts;
}

KmeansResult kmeans(const Mat& points, int k, std::uint64_t seed) {
  const int n = points.rows();
  const int d = points.cols();
  if (n == 0) throw ValidationError("kmeans: no points");
  if (k < 1) throw ValidationError("kmeans: k must be positive");
  if (k > n) throw ValidationError("kmeans: more clusters than points");

  Rng rng(seed);
  const std::vector<double> pnorm = row_norms_sq(points);

  // k-means++ seeding
  std::vector<int> chosen{rng.uniform_int(n)};
  std::vector<double> mind(n);
  for (int i = 0; i < n; ++i) mind[i] = dist_sq(points, i, points, chosen[0]);
  while (static_cast<int>(chosen.size()) < k) {
    double total = 0.0;
    for (double v : mind) total += v;
    int pick;
    if (total <= 0.0) {
      pick = rng.uniform_int(n);  // all remaining points coincide
    } else {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      pick = -1;
      for (int i = 0; i < n; ++i) {
        if (mind[i] <= 0.0) continue;
        cum += mind[i];
        if (cum >= r) {
          pick = i;
          break;
        }
      }
      if (pick < 0)
        for (int i = n - 1; i >= 0; --i)
          if (mind[i] > 0.0) {
            pick = i;
            break;
          }
    }
    chosen.push_back(pick);
    for (int i = 0; i < n; ++i)
      mind[i] = std::min(mind[i], dist_sq(points, i, points, pick));
  }

  Mat centroids(k, d);
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < d; ++j) centroids(c, j) = points(chosen[c], j);

  KmeansResult result;
  result.assignments.assign(n, -1);
  std::vector<int> prev;
  std::vector<std::int64_t> members(k);
  for (int iter = 0; iter < 100; ++iter) {
    prev = result.assignments;
    const std::vector<double> cnorm = row_norms_sq(centroids);
    const Mat g = matmul(points, transpose(centroids));
    std::fill(members.begin(), members.end(), 0);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = pnorm[i] + cnorm[0] - 2.0 * g(i, 0);
      for (int c = 1; c < k; ++c) {
        const double dd = pnorm[i] + cnorm[c] - 2.0 * g(i, c);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      result.assignments[i] = best;
      ++members[best];
    }

    // Repair: hand the farthest point of the largest cluster to each empty one.
    for (int e = 0; e < k; ++e) {
      if (members[e] > 0) continue;
      int largest = 0;
      for (int c = 1; c < k; ++c)
        if (members[c] > members[largest]) largest = c;
      int farthest = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (result.assignments[i] != largest) continue;
        const double dd = dist_sq(points, i, centroids, largest);
        if (dd > far_d) {
          far_d = dd;
          farthest = i;
        }
      }
      result.assignments[farthest] = e;
      --members[largest];
      ++members[e];
    }

    centroids = Mat(k, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        centroids(result.assignments[i], j) += points(i, j);
    for (int c = 0; c < k; ++c)
      for (int j = 0; j < d; ++j)
        centroids(c, j) /= static_cast<double>(members[c]);

    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
      inertia += dist_sq(points, i, centroids, result.assignments[i]);
    result.inertia_history.push_back(inertia);
    if (result.assignments == prev) break;
  }
  result.centroids = std::move(centroids);
  result.inertia = result.inertia_history.back();
  return result;
}

std::vector<int> class_budgets(const std::vector<std::int64_t>& class_sizes,
                               int k) {
  const int c = static_cast<int>(class_sizes.size());
  if (k < c)
    throw ValidationError("cluster budget smaller than the class count");
  std::int64_t total = 0;
  for (std::int64_t s : class_sizes) {
    if (s <= 0) throw ValidationError("class with zero training rows");
    total += s;
  }
  std::vector<int> budgets(c);
  std::vector<std::pair<std::int64_t, int>> remainders;  // (-frac, class)
  int assigned = 0;
  for (int i = 0; i < c; ++i) {
    const std::int64_t num = static_cast<std::int64_t>(k) * class_sizes[i];
    budgets[i] = static_cast<int>(num / total);
    assigned += budgets[i];
    remainders.emplace_back(-(num % total), i);
  }
  std::sort(remainders.begin(), remainders.end());
  for (int leftover = k - assigned, i = 0; leftover > 0; --leftover, ++i)
    ++budgets[remainders[i].second];
  for (int i = 0; i < c; ++i) {
    while (budgets[i] < 1) {
      int donor = -1;
      for (int j = 0; j < c; ++j)
        if (budgets[j] > 1 && (donor < 0 || budgets[j] > budgets[donor]))
          donor = j;
      --budgets[donor];
      ++budgets[i];
    }
  }
  return budgets;
}

std::vector<int> target_pseudo_labels(const Mat& embeddings, Task task,
                                      const std::vector<double>& labels,
                                      const std::vector<int>& class_labels,
                                      int num_classes, int k,
                                      std::uint64_t seed) {
  if (task == Task::kRegression) {
    Mat points(static_cast<int>(labels.size()), 1);
    for (size_t i = 0; i < labels.size(); ++i)
      points(static_cast<int>(i), 0) = labels[i];
    return kmeans(points, k, seed).assignments;
  }

  const int n = static_cast<int>(class_labels.size());
  if (embeddings.rows() != n)
    throw ValidationError("target_pseudo_labels: embedding rows mismatch");
  std::vector<std::vector<int>> members(num_classes);
  for (int i = 0; i < n; ++i) members[class_labels[i]].push_back(i);
  std::vector<std::int64_t> sizes;
  for (const auto& m : members)
    sizes.push_back(static_cast<std::int64_t>(m.size()));
  const std::vector<int> budgets = class_budgets(sizes, k);

  std::vector<int> assign(n, -1);
  int offset = 0;
  for (int c = 0; c < num_classes; ++c) {
    Mat sub(static_cast<int>(members[c].size()), embeddings.cols());
    for (size_t i = 0; i < members[c].size(); ++i)
      for (int j = 0; j < embeddings.cols(); ++j)
        sub(static_cast<int>(i), j) = embeddings(members[c][i], j);
    const KmeansResult res = kmeans(sub, budgets[c], Rng::mix(seed, c));
    for (size_t i = 0; i < members[c].size(); ++i)
      assign[members[c][i]] = offset + res.assignments[i];
    offset += budgets[c];
  }
  return assign;
}

namespace {

// Clusters the label-visible rows task-aware, then places the remaining rows
// with the nearest embedding-space cluster centroid.
std::vector<int> assign_target_clusters(const Mat& z, const RdbInstance& rdb,
                                        int k, std::uint64_t seed) {
  const std::vector<int> train = rdb.rows_in_split(Split::kTrain);
  if (train.empty())
    throw ValidationError("target table has no training rows to cluster");

  Mat ztr(static_cast<int>(train.size()), z.cols());
  std::vector<double> labels;
  std::vector<int> classes;
  for (size_t i = 0; i < train.size(); ++i) {
    for (int j = 0; j < z.cols(); ++j)
      ztr(static_cast<int>(i), j) = z(train[i], j);
    if (rdb.schema.task == Task::kRegression)
      labels.push_back(rdb.labels[train[i]]);
    else
      classes.push_back(rdb.class_labels[train[i]]);
  }
  const std::vector<int> sub =
      target_pseudo_labels(ztr, rdb.schema.task, labels, classes,
                           rdb.schema.num_classes, k, seed);

  Mat centroids(k, z.cols());
  std::vector<std::int64_t> count(k, 0);
  for (size_t i = 0; i < train.size(); ++i) {
    for (int j = 0; j < z.cols(); ++j)
      centroids(sub[i], j) += ztr(static_cast<int>(i), j);
    ++count[sub[i]];
  }
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < z.cols(); ++j)
      centroids(c, j) /= static_cast<double>(count[c]);

  std::vector<int> assign = nearest_centroid(z, centroids);
  for (size_t i = 0; i < train.size(); ++i) assign[train[i]] = sub[i];
  return assign;
}

}  // namespace

PretrainResult pretrain(const RdbInstance& rdb, const Reg& reg,
                        const PretrainConfig& cfg) {
  if (cfg.epochs < 1) throw ValidationError("pretrain: epochs must be >= 1");
  if (cfg.recluster_period < 1)
    throw ValidationError("pretrain: recluster period must be >= 1");
  for (const TableData& td : rdb.tables)
    if (td.rows() == 0)
      throw ValidationError("pretrain: every table needs at least one row");

  const int n_tables = static_cast<int>(rdb.tables.size());
  const int tgt = rdb.target_index();
  const int layers = cfg.layers > 0 ? cfg.layers : n_tables;

  PretrainResult out;
  out.pseudo.counts = allocate_counts(rdb, cfg.ratio);
  out.bank = init_bank(rdb, cfg.d_token, Rng::mix(cfg.seed, 0));
  out.params = init_hgnn(Rng::mix(cfg.seed, 1), n_tables,
                         static_cast<int>(reg.relations.size()), layers,
                         cfg.d_token, cfg.hidden);

  std::vector<Mat> head_w, head_b;
  {
    Rng rng(Rng::mix(cfg.seed, 2));
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    for (int t = 0; t < n_tables; ++t) {
      head_w.push_back(
          uniform_mat(cfg.hidden, out.pseudo.counts[t], bound, rng));
      head_b.push_back(uniform_mat(1, out.pseudo.counts[t], bound, rng));
    }
  }

  out.pseudo.assignments.assign(n_tables, {});
  int refresh_round = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    BoundBank bb = bind_bank(tape, out.bank, true);
    BoundHgnn bh = bind_hgnn(tape, out.params, true);
    std::vector<int> hw(n_tables), hb(n_tables);
    for (int t = 0; t < n_tables; ++t) {
      hw[t] = tape.leaf(head_w[t], true);
      hb[t] = tape.leaf(head_b[t], true);
    }

    const std::vector<int> feats = encode_all(tape, bb, out.bank, rdb);
    const std::vector<int> z =
        hgnn_forward(tape, bh, out.params, view_of(reg), feats);

    if (epoch % cfg.recluster_period == 0) {
      for (int t = 0; t < n_tables; ++t) {
        const Mat& zt = tape.value(z[t]);
        if (t == tgt) {
          out.pseudo.assignments[t] = assign_target_clusters(
              zt, rdb, out.pseudo.counts[t],
              Rng::mix(cfg.seed, 700 + refresh_round));
        } else {
          out.pseudo.assignments[t] =
              kmeans(zt, out.pseudo.counts[t],
                     Rng::mix(cfg.seed, 300 + refresh_round * n_tables + t))
                  .assignments;
        }
      }
      ++refresh_round;
    }

    int loss = -1;
    for (int t = 0; t < n_tables; ++t) {
      const int logits =
          tape.add_row_broadcast(tape.matmul(z[t], hw[t]), hb[t]);
      const int ce =
          tape.softmax_cross_entropy(logits, out.pseudo.assignments[t]);
      loss = loss < 0 ? ce : tape.add(loss, ce);
    }
    loss = tape.scale(loss, 1.0 / static_cast<double>(n_tables));

    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value))
      throw NumericalError("pretraining diverged at epoch " +
                           std::to_string(epoch));
    out.loss_curve.push_back(loss_value);

    tape.backward(loss);
    bank_sgd_step(out.bank, tape, bb, cfg.lr, cfg.weight_decay);
    hgnn_sgd_step(out.params, tape, bh, cfg.lr, cfg.weight_decay);
    for (int t = 0; t < n_tables; ++t) {
      if (tape.grad(hw[t]).rows() > 0)
        sgd_step(head_w[t], tape.grad(hw[t]), cfg.lr, cfg.weight_decay);
      if (tape.grad(hb[t]).rows() > 0)
        sgd_step(head_b[t], tape.grad(hb[t]), cfg.lr, cfg.weight_decay);
    }
  }

  // Final embeddings give the centroids reported with the last assignments.
  Tape tape;
  BoundBank bb = bind_bank(tape, out.bank, false);
  BoundHgnn bh = bind_hgnn(tape, out.params, false);
  const std::vector<int> z = hgnn_forward(tape, bh, out.params, view_of(reg),
                                          encode_all(tape, bb, out.bank, rdb));
  for (int t = 0; t < n_tables; ++t) {
    const Mat& zt = tape.value(z[t]);
    Mat cent(out.pseudo.counts[t], zt.cols());
    std::vector<std::int64_t> count(out.pseudo.counts[t], 0);
    for (int i = 0; i < zt.rows(); ++i) {
      const int c = out.pseudo.assignments[t][i];
      for (int j = 0; j < zt.cols(); ++j) cent(c, j) += zt(i, j);
      ++count[c];
    }
    for (int c = 0; c < out.pseudo.counts[t]; ++c)
      if (count[c] > 0)
        for (int j = 0; j < zt.cols(); ++j)
          cent(c, j) /= static_cast<double>(count[c]);
    out.pseudo.centroids.push_back(std::move(cent));
  }
  return out;
}

}  // namespace t2g
