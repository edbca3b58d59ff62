#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "t2g/csv.hpp"
#include "t2g/distill.hpp"
#include "t2g/errors.hpp"
#include "t2g/rng.hpp"
#include "t2g/stats.hpp"

using t2g::DistillConfig;
using t2g::Mat;
using t2g::RdbInstance;
using t2g::SyntheticGraph;
using t2g::Tape;

namespace {

struct Pipeline {
  RdbInstance rdb;
  t2g::Reg reg;
  t2g::PretrainResult pre;
  t2g::SyntheticStructure structure;
};

Pipeline toy_pipeline(const std::string& task_json, std::uint64_t seed) {
  t2g::Schema schema = t2g::parse_schema(R"({
    "tables": [
      {"name": "p", "columns": [
        {"name": "id", "kind": "primary-key"},
        {"name": "f", "kind": "numerical"}
      ]},
      {"name": "c", "columns": [
        {"name": "id", "kind": "primary-key"},
        {"name": "p", "kind": "foreign-key", "target": "p"},
        {"name": "x", "kind": "numerical"},
        {"name": "g", "kind": "categorical"}
      ]}
    ],
    "target_table": "c",
    )" + task_json + R"(,
    "label_column": "y",
    "split_column": "split"
  })");
  t2g::Rng rng(seed);
  const int parents = 5, children = 40;
  std::string pcsv = "id,f\n";
  for (int i = 0; i < parents; ++i)
    pcsv += "p" + std::to_string(i) + "," + std::to_string(rng.normal()) + "\n";
  std::string ccsv = "id,p,x,g,y,split\n";
  const bool classification =
      task_json.find("classification") != std::string::npos;
  for (int i = 0; i < children; ++i) {
    const int parent = rng.uniform_int(parents);
    const std::string label = classification
                                  ? std::to_string(parent % 2)
                                  : std::to_string(0.5 * parent + rng.normal());
    ccsv += "c" + std::to_string(i) + ",p" + std::to_string(parent) + "," +
            std::to_string(rng.normal() + parent) + ",g" +
            std::to_string(i % 5) + "," + label + "," +
            (i % 5 == 4 ? "val" : "train") + "\n";
  }
  std::map<std::string, t2g::CsvTable> data{{"p", t2g::parse_csv(pcsv)},
                                            {"c", t2g::parse_csv(ccsv)}};
  Pipeline out;
  out.rdb = t2g::load_rdb(schema, data);
  t2g::normalize(out.rdb);
  out.reg = t2g::build_reg(out.rdb);
  t2g::PretrainConfig pc;
  pc.epochs = 4;
  pc.lr = 0.05;
  pc.recluster_period = 2;
  pc.seed = seed;
  pc.ratio = 0.2;
  pc.d_token = 4;
  pc.hidden = 8;
  out.pre = t2g::pretrain(out.rdb, out.reg, pc);
  out.structure = t2g::build_structure(out.reg, out.pre.pseudo, 0.5);
  return out;
}

DistillConfig toy_config() {
  DistillConfig cfg;
  cfg.iterations = 40;
  cfg.lr = 0.05;
  cfg.beta = 1.0;
  cfg.seed = 7;
  cfg.hidden = 8;
  return cfg;
}

// Gaussian elimination with partial pivoting, for small oracle systems.
Mat gauss_solve(Mat a, Mat b) {
  const int n = a.rows();
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    for (int c = 0; c < n; ++c) std::swap(a(col, c), a(pivot, c));
    for (int c = 0; c < b.cols(); ++c) std::swap(b(col, c), b(pivot, c));
    for (int r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (int c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      for (int c = 0; c < b.cols(); ++c) b(r, c) -= f * b(col, c);
    }
  }
  for (int col = n - 1; col >= 0; --col) {
    for (int c = 0; c < b.cols(); ++c) {
      double s = b(col, c);
      for (int k = col + 1; k < n; ++k) s -= a(col, k) * b(k, c);
      b(col, c) = s / a(col, col);
    }
  }
  return b;
}

double ridge_objective(const Mat& z, const Mat& y, const Mat& w,
                       double lambda) {
  Mat pred = t2g::matmul(z, w);
  double obj = 0.0;
  for (int i = 0; i < y.rows(); ++i)
    for (int j = 0; j < y.cols(); ++j) {
      const double d = y(i, j) - pred(i, j);
      obj += d * d;
    }
  return obj + lambda * t2g::frob_norm_sq(w);
}

Mat tape_krr(const Mat& z, const Mat& y, double lambda) {
  Tape tape;
  const int w = t2g::krr_solve(tape, tape.leaf(z), tape.leaf(y), lambda);
  return tape.value(w);
}

}  // namespace

TEST_CASE("krr closed form on scalars") {
  CHECK(tape_krr(Mat::from_rows({{1.0}}), Mat::from_rows({{2.0}}), 1.0)(0, 0) ==
        doctest::Approx(1.0));
  Mat w0 = tape_krr(Mat::from_rows({{1.0, 2.0}, {3.0, 4.0}}), Mat(2, 3), 0.5);
  CHECK(t2g::frob_norm_sq(w0) == doctest::Approx(0.0));
  Tape tape;
  CHECK_THROWS_AS(t2g::krr_solve(tape, tape.leaf(Mat(2, 2)),
                                 tape.leaf(Mat(2, 1)), 0.0),
                  t2g::ValidationError);
}

TEST_CASE("krr matches a gradient-descent ridge minimizer") {
  t2g::Rng rng(41);
  Mat z(12, 4), y(12, 2);
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
  const double lambda = 1e-2;

  Mat got = tape_krr(z, y, lambda);

  Mat w(4, 2);
  const double lr = 0.4 / (t2g::frob_norm_sq(z) + lambda);
  const Mat zt = t2g::transpose(z);
  for (int step = 0; step < 10000; ++step) {
    Mat residual = t2g::matmul(z, w);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 2; ++j) residual(i, j) -= y(i, j);
    Mat grad = t2g::matmul(zt, residual);
    for (std::size_t i = 0; i < w.size(); ++i)
      w.data()[i] -= lr * 2.0 * (grad.data()[i] + lambda * w.data()[i]);
  }
  const double rel = std::sqrt(t2g::frob_norm_sq([&] {
    Mat d = got;
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] -= w.data()[i];
    return d;
  }()) / t2g::frob_norm_sq(w));
  CHECK(rel < 1e-4);
}

TEST_CASE("krr solution minimizes the ridge objective") {
  t2g::Rng rng(43);
  Mat z(9, 3), y(9, 2);
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
  const double lambda = 0.05;
  Mat w = tape_krr(z, y, lambda);
  const double base = ridge_objective(z, y, w, lambda);
  for (int trial = 0; trial < 20; ++trial) {
    Mat delta(3, 2);
    double norm = 0.0;
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta.data()[i] = rng.normal();
      norm += delta.data()[i] * delta.data()[i];
    }
    Mat perturbed = w;
    for (std::size_t i = 0; i < w.size(); ++i)
      perturbed.data()[i] += delta.data()[i] * (1e-3 / std::sqrt(norm));
    CHECK(ridge_objective(z, y, perturbed, lambda) >= base);
  }
}

TEST_CASE("supervision matrices follow the task") {
  Pipeline clf =
      toy_pipeline("\"task\": \"classification\", \"num_classes\": 2", 19);
  t2g::DistillProblem problem = t2g::make_problem(
      clf.rdb, clf.reg, clf.pre.bank, clf.pre.pseudo);
  std::vector<int> class_count(2, 0);
  for (int row : clf.rdb.rows_in_split(t2g::Split::kTrain))
    ++class_count[clf.rdb.class_labels[row]];
  for (int j = 0; j < 2; ++j) {
    double col = 0.0;
    for (int i = 0; i < problem.y_train.rows(); ++i) col += problem.y_train(i, j);
    CHECK(col == doctest::Approx(class_count[j]));
  }
  for (int i = 0; i < problem.pseudo_train.rows(); ++i) {
    double row = 0.0;
    for (int j = 0; j < problem.pseudo_train.cols(); ++j)
      row += problem.pseudo_train(i, j);
    CHECK(row == doctest::Approx(1.0));
  }

  Pipeline reg = toy_pipeline("\"task\": \"regression\"", 19);
  t2g::DistillProblem rp =
      t2g::make_problem(reg.rdb, reg.reg, reg.pre.bank, reg.pre.pseudo);
  std::vector<double> std_labels(rp.y_train.data(),
                                 rp.y_train.data() + rp.y_train.size());
  CHECK(t2g::mean_of(std_labels) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(t2g::population_variance(std_labels) == doctest::Approx(1.0));
  CHECK(rp.label_std > 0.0);
}

TEST_CASE("self-distillation at tiny lambda reproduces the ridge residual") {
  t2g::Schema schema = t2g::parse_schema(R"({
    "tables": [
      {"name": "t", "columns": [
        {"name": "id", "kind": "primary-key"},
        {"name": "a", "kind": "numerical"},
        {"name": "b", "kind": "numerical"},
        {"name": "g", "kind": "categorical"}
      ]}
    ],
    "target_table": "t",
    "task": "regression",
    "label_column": "y",
    "split_column": "split"
  })");
  std::string csv = "id,a,b,g,y,split\n";
  t2g::Rng rng(3);
  for (int i = 0; i < 5; ++i)
    csv += "r" + std::to_string(i) + "," + std::to_string(rng.normal()) + "," +
           std::to_string(rng.normal()) + ",g" + std::to_string(i) + "," +
           std::to_string(rng.normal()) + ",train\n";
  std::map<std::string, t2g::CsvTable> data{{"t", t2g::parse_csv(csv)}};
  RdbInstance rdb = t2g::load_rdb(schema, data);
  t2g::normalize(rdb);
  t2g::Reg reg = t2g::build_reg(rdb);
  t2g::TokenizerBank bank = t2g::init_bank(rdb, 4, 77);

  t2g::PseudoLabels pseudo;
  pseudo.assignments = {{0, 1, 2, 3, 4}};
  pseudo.counts = {5};

  t2g::DistillProblem problem = t2g::make_problem(rdb, reg, bank, pseudo);

  SyntheticGraph graph;
  graph.structure.graph.node_counts = {5};
  graph.h = {problem.features[0]};  // synthetic copy of the original rows
  graph.y = problem.y_train;

  const double lambda = 1e-6;
  t2g::HgnnParams theta = t2g::init_hgnn(99, 1, 0, 1, 4, 8);
  t2g::LossBreakdown loss =
      t2g::compute_losses(problem, graph, theta, 0.0, lambda);

  // by hand: Z = X W_self + bias, residual of the ridge self-fit
  Mat z = t2g::matmul(problem.features[0], theta.self_w[0][0]);
  for (int i = 0; i < z.rows(); ++i)
    for (int j = 0; j < z.cols(); ++j) z(i, j) += theta.self_b[0][0](0, j);
  Mat gram = t2g::matmul(z, t2g::transpose(z));
  for (int i = 0; i < 5; ++i) gram(i, i) += lambda;
  Mat s = gauss_solve(gram, problem.y_train);
  double want = 0.0;
  for (int i = 0; i < 5; ++i) want += lambda * s(i, 0) * lambda * s(i, 0);
  want /= 5.0;
  CHECK(loss.task == doctest::Approx(want).epsilon(1e-6));
  CHECK(loss.task < 1e-2);  // near-interpolation at tiny lambda
}

TEST_CASE("beta zero reduces the total to the task term exactly") {
  Pipeline p = toy_pipeline("\"task\": \"regression\"", 29);
  t2g::DistillProblem problem =
      t2g::make_problem(p.rdb, p.reg, p.pre.bank, p.pre.pseudo);
  DistillConfig cfg = toy_config();
  cfg.iterations = 0;
  SyntheticGraph init =
      t2g::run_distillation(p.rdb, p.reg, p.pre.bank, p.pre.pseudo,
                            p.structure, cfg)
          .graph;
  t2g::HgnnParams theta = t2g::init_hgnn(5, 2, 2, 2, 4, 8);
  t2g::LossBreakdown loss =
      t2g::compute_losses(problem, init, theta, 0.0, 1e-2);
  CHECK(loss.total == loss.task);
  CHECK(loss.pseudo > 0.0);
}

TEST_CASE("beta zero trajectory equals a run without the pseudo branch") {
  Pipeline p = toy_pipeline("\"task\": \"regression\"", 31);
  DistillConfig cfg = toy_config();
  cfg.beta = 0.0;
  cfg.iterations = 8;
  for (int i = 0; i < 8; ++i) cfg.theta_seeds.push_back(900 + i);

  t2g::DistillResult with_branch = t2g::run_distillation(
      p.rdb, p.reg, p.pre.bank, p.pre.pseudo, p.structure, cfg);

  DistillConfig init_cfg = cfg;
  init_cfg.iterations = 0;
  SyntheticGraph graph = t2g::run_distillation(
      p.rdb, p.reg, p.pre.bank, p.pre.pseudo, p.structure, init_cfg).graph;
  t2g::DistillProblem problem =
      t2g::make_problem(p.rdb, p.reg, p.pre.bank, p.pre.pseudo);
  for (int i = 0; i < 8; ++i) {
    t2g::HgnnParams theta = t2g::init_hgnn(
        cfg.theta_seeds[i], 2, static_cast<int>(p.reg.relations.size()), 2, 4,
        cfg.hidden);
    t2g::LossGrads grads = t2g::loss_gradients(problem, graph, theta, 0.0,
                                               cfg.lambda, false);
    for (size_t t = 0; t < graph.h.size(); ++t)
      if (!grads.h[t].empty()) t2g::sgd_step(graph.h[t], grads.h[t], cfg.lr, 0.0);
    if (!grads.y.empty()) t2g::sgd_step(graph.y, grads.y, cfg.lr, 0.0);
  }
  for (size_t t = 0; t < graph.h.size(); ++t)
    CHECK(graph.h[t] == with_branch.graph.h[t]);
  CHECK(graph.y == with_branch.graph.y);
}

TEST_CASE("analytic gradients match central differences") {
  Pipeline p = toy_pipeline("\"task\": \"regression\"", 37);
  t2g::DistillProblem problem =
      t2g::make_problem(p.rdb, p.reg, p.pre.bank, p.pre.pseudo);
  DistillConfig cfg = toy_config();
  cfg.iterations = 0;
  SyntheticGraph graph = t2g::run_distillation(
      p.rdb, p.reg, p.pre.bank, p.pre.pseudo, p.structure, cfg).graph;
  t2g::HgnnParams theta =
      t2g::init_hgnn(55, 2, static_cast<int>(p.reg.relations.size()), 2, 4, 8);
  const double beta = 1.0, lambda = 1e-2, eps = 1e-5;
  t2g::LossGrads grads = t2g::loss_gradients(problem, graph, theta, beta, lambda);

  t2g::Rng rng(61);
  auto check_entry = [&](Mat& param, const Mat& grad) {
    const int i = rng.uniform_int(param.rows());
    const int j = rng.uniform_int(param.cols());
    const double keep = param(i, j);
    param(i, j) = keep + eps;
    const double up = t2g::compute_losses(problem, graph, theta, beta, lambda).total;
    param(i, j) = keep - eps;
    const double down =
        t2g::compute_losses(problem, graph, theta, beta, lambda).total;
    param(i, j) = keep;
    const double fd = (up - down) / (2.0 * eps);
    const double got = grad.empty() ? 0.0 : grad(i, j);
    CHECK(std::abs(fd - got) <= 1e-3 * std::max({1.0, std::abs(fd), std::abs(got)}));
  };
  for (int trial = 0; trial < 6; ++trial) {
    check_entry(graph.h[0], grads.h[0]);
    check_entry(graph.h[1], grads.h[1]);
    check_entry(graph.y, grads.y);
  }
}

TEST_CASE("distillation descends and reaches every table") {
  Pipeline p = toy_pipeline("\"task\": \"regression\"", 47);
  DistillConfig cfg = toy_config();
  cfg.iterations = 80;

  DistillConfig init_cfg = cfg;
  init_cfg.iterations = 0;
  t2g::DistillResult init = t2g::run_distillation(
      p.rdb, p.reg, p.pre.bank, p.pre.pseudo, p.structure, init_cfg);
  CHECK(init.loss_log.empty());

  t2g::DistillResult res = t2g::run_distillation(
      p.rdb, p.reg, p.pre.bank, p.pre.pseudo, p.structure, cfg);
  REQUIRE(res.loss_log.size() == 80);
  auto median8 = [&](size_t at) {
    std::vector<double> w;
    for (size_t i = at; i < at + 8; ++i) w.push_back(res.loss_log[i].total);
    std::sort(w.begin(), w.end());
    return w[4];
  };
  CHECK(median8(72) < median8(0));

  // one-hop parent and the target both moved
  for (size_t t = 0; t < res.graph.h.size(); ++t)
    CHECK(t2g::max_abs_diff(res.graph.h[t], init.graph.h[t]) > 0.0);
  CHECK(t2g::max_abs_diff(res.graph.y, init.graph.y) > 0.0);
}

TEST_CASE("distillation is deterministic") {
  Pipeline p = toy_pipeline("\"task\": \"regression\"", 53);
  DistillConfig cfg = toy_config();
  cfg.iterations = 12;
  t2g::DistillResult a = t2g::run_distillation(
      p.rdb, p.reg, p.pre.bank, p.pre.pseudo, p.structure, cfg);
  t2g::DistillResult b = t2g::run_distillation(
      p.rdb, p.reg, p.pre.bank, p.pre.pseudo, p.structure, cfg);
  for (size_t t = 0; t < a.graph.h.size(); ++t)
    CHECK(a.graph.h[t] == b.graph.h[t]);
  CHECK(a.graph.y == b.graph.y);
  CHECK(a.loss_log.size() == b.loss_log.size());
  for (size_t i = 0; i < a.loss_log.size(); ++i)
    CHECK(a.loss_log[i] == b.loss_log[i]);
}

TEST_CASE("classification label init is one-hot per cluster class") {
  Pipeline p =
      toy_pipeline("\"task\": \"classification\", \"num_classes\": 2", 59);
  DistillConfig cfg = toy_config();
  cfg.iterations = 0;
  SyntheticGraph graph = t2g::run_distillation(
      p.rdb, p.reg, p.pre.bank, p.pre.pseudo, p.structure, cfg).graph;
  for (int a = 0; a < graph.y.rows(); ++a) {
    double row = 0.0;
    for (int j = 0; j < graph.y.cols(); ++j) {
      CHECK((graph.y(a, j) == 0.0 || graph.y(a, j) == 1.0));
      row += graph.y(a, j);
    }
    CHECK(row == doctest::Approx(1.0));
  }
}

TEST_CASE("distillation aborts on numerical blowup") {
  Pipeline p = toy_pipeline("\"task\": \"regression\"", 67);
  DistillConfig cfg = toy_config();
  cfg.iterations = 10;
  cfg.lr = 1e200;
  CHECK_THROWS_AS(t2g::run_distillation(p.rdb, p.reg, p.pre.bank,
                                        p.pre.pseudo, p.structure, cfg),
                  t2g::NumericalError);
}

TEST_CASE("loss log renders as csv lines") {
  std::vector<t2g::LossBreakdown> log{{1.0, 2.0, 3.0}, {0.5, 0.25, 0.75}};
  const std::string csv = t2g::loss_log_csv(log);
  CHECK(csv.find("iter,L_task,L_pseudo,L_total\n") == 0);
  CHECK(csv.find("0,1,2,3\n") != std::string::npos);
  CHECK(csv.find("1,0.5,0.25,0.75\n") != std::string::npos);
}
