// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; with none, all run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lidadv/attack.hpp"
#include "lidadv/detector.hpp"
#include "lidadv/harness.hpp"
#include "lidadv/lid.hpp"
#include "support.hpp"

namespace {

using namespace lidadv;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::path(LIDADV_ACCEPTANCE_WORK_DIR) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig mnist_config(const std::string& name) {
  const fs::path data = fs::path(LIDADV_TEST_DATA_DIR) / "mnist5k";
  ExperimentConfig cfg;
  cfg.dataset = "mnist";
  cfg.train_images = data / "train-images-idx3-ubyte.gz";
  cfg.train_labels = data / "train-labels-idx1-ubyte.gz";
  cfg.test_images = data / "t10k-images-idx3-ubyte.gz";
  cfg.test_labels = data / "t10k-labels-idx1-ubyte.gz";
  cfg.out_dir = work_dir(name);
  return cfg;
}

/// 1. lid_mle([1,2,4]) = 1/ln 2 and scale invariance on 100 random sets.
Outcome lid_analytic() {
  const double got = lid_mle(std::vector<double>{1, 2, 4});
  const double err = std::abs(got - 1.0 / std::numbers::ln2);
  Rng rng(101);
  std::uniform_real_distribution<double> u(1e-3, 10.0);
  std::uniform_real_distribution<double> s(1e-4, 1e4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> d(20);
    for (auto& v : d) v = u(rng);
    std::sort(d.begin(), d.end());
    const double scale = s(rng);
    std::vector<double> scaled(d);
    for (auto& v : scaled) v *= scale;
    const double a = lid_mle(d);
    worst = std::max(worst, std::abs(lid_mle(scaled) - a) / a);
  }
  return {err <= 1e-9 && worst <= 1e-9,
          fmt("|lid-1/ln2| = %.2e, max relative scale drift = %.2e", err, worst)};
}

/// 2. Uniform d-ball, n = 10000, k = 100, 100 queries: median within 20% of d.
Outcome lid_uniform_ball() {
  bool ok = true;
  std::string detail;
  for (std::size_t d : {1, 2, 5}) {
    Rng rng(derive_seed(2018, "ball", d));
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u;
    std::vector<Tensor> pts;
    pts.reserve(10000);
    for (int i = 0; i < 10000; ++i) {
      std::vector<double> v(d);
      double norm = 0.0;
      for (auto& x : v) {
        x = g(rng);
        norm += x * x;
      }
      const double r = std::pow(u(rng), 1.0 / static_cast<double>(d)) / std::sqrt(norm);
      for (auto& x : v) x *= r;
      pts.push_back(Tensor::vector(std::move(v)));
    }
    std::vector<double> est;
    for (std::size_t q = 0; q < 100; ++q) {
      est.push_back(lid_mle(knn_distances(pts[q].values(), pts, 100, q)));
    }
    std::nth_element(est.begin(), est.begin() + 50, est.end());
    const double hi = est[50];
    std::nth_element(est.begin(), est.begin() + 49, est.begin() + 50);
    const double median = 0.5 * (est[49] + hi);
    const double rel = std::abs(median - static_cast<double>(d)) / static_cast<double>(d);
    ok = ok && rel <= 0.2;
    detail += fmt("d=%zu median %.3f; ", d, median);
  }
  return {ok, detail + "tolerance 20%"};
}

/// 3. input_gradient vs central differences on 20 random nets and losses.
Outcome gradient_check() {
  Rng rng(303);
  double worst = 0.0;
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(2, 8);
    const std::size_t in = dim(rng);
    const std::size_t classes = 2 + trial % 4;
    const Network net = testing::random_network(rng, in, classes, 1 + trial % 3);
    const Tensor x = testing::random_tensor(in, rng);
    std::unique_ptr<LogitLoss> loss;
    if (trial % 3 == 0) {
      loss = std::make_unique<CrossEntropyLoss>(trial % classes);
    } else if (trial % 3 == 1) {
      std::vector<double> w(classes);
      for (auto& v : w) v = std::normal_distribution<double>()(rng);
      loss = std::make_unique<LinearLogitLoss>(w);
    } else {
      loss = std::make_unique<MarginLoss>(trial % classes, 1e3);
    }
    const Tensor grad = input_gradient(net, x, *loss);
    for (std::size_t i = 0; i < in; ++i) {
      Tensor up = x;
      Tensor down = x;
      up[i] += h;
      down[i] -= h;
      const double fd =
          (loss->value(logits(net, up).values()) - loss->value(logits(net, down).values())) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]));
    }
  }
  return {worst < 1e-4, fmt("max |analytic - finite difference| = %.2e (limit 1e-4)", worst)};
}

/// 4. Elastic-net objective at beta = 0 equals the C&W objective.
Outcome ead_cw_reduction() {
  Rng rng(404);
  const Network net = testing::random_network(rng, 10, 4, 2);
  const Tensor x = testing::random_tensor(10, rng);
  std::normal_distribution<double> g(0.0, 0.3);
  std::uniform_real_distribution<double> logc(-3.0, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Tensor adv = x;
    for (std::size_t j = 0; j < adv.size(); ++j) adv[j] += g(rng);
    const double c = std::pow(10.0, logc(rng));
    const double kappa = static_cast<double>(i % 5) * 10.0;
    worst = std::max(worst, std::abs(ead_objective(net, x, i % 4, adv, c, kappa, 0.0) -
                                     cw_objective(net, x, i % 4, adv, c, kappa)));
  }
  return {worst <= 1e-12, fmt("max |EAD(beta=0) - CW| over 1000 deltas = %.2e (limit 1e-12)", worst)};
}

/// 5. Success rate, margin and box validity, and the kappa/L2 trade-off.
Outcome attack_validity() {
  const auto f = testing::make_blob_fixture(55);
  const auto targets = select_attack_targets(f.net, f.test, 100, 5);
  std::vector<Tensor> xs;
  std::vector<std::size_t> labels;
  for (const auto& t : targets) {
    xs.push_back(t.x);
    labels.push_back(t.label);
  }
  AttackConfig cfg;
  bool valid = true;
  std::string detail;
  double mean_l2[2] = {0.0, 0.0};
  for (AttackMethod m : {AttackMethod::cw, AttackMethod::ead}) {
    for (double kappa : {0.0, 10.0}) {
      if (m == AttackMethod::ead && kappa > 0.0) continue;
      cfg.kappa = kappa;
      const auto results = run_attacks(m, f.net, xs, labels, cfg);
      std::size_t ok = 0;
      for (const auto& r : results) {
        for (double v : r.adversarial.values()) valid = valid && cfg.box.contains(v);
        if (!r.success) continue;
        ++ok;
        valid = valid && r.achieved_margin >= kappa - 1e-6;
        valid = valid && predict(f.net, r.adversarial) != r.true_label;
      }
      const double rate = static_cast<double>(ok) / static_cast<double>(results.size());
      if (kappa == 0.0) {
        valid = valid && rate >= 0.95;
        detail += fmt("%s success %.0f%%; ", std::string(to_string(m)).c_str(), 100 * rate);
      }
      if (m == AttackMethod::cw) {
        double s = 0.0;
        for (const auto& r : results) s += r.l2;
        mean_l2[kappa > 0.0 ? 1 : 0] = s / static_cast<double>(results.size());
      }
    }
  }
  const bool trend = mean_l2[1] > mean_l2[0];
  return {valid && trend, detail + fmt("cw mean L2 k=0 %.4f < k=10 %.4f; margins/box %s", mean_l2[0], mean_l2[1],
                                       valid ? "ok" : "VIOLATED")};
}

/// 6. Decision rules on shared candidate sets.
Outcome decision_rules() {
  const auto f = testing::make_blob_fixture(66);
  const auto targets = select_attack_targets(f.net, f.test, 40, 6);
  AttackConfig cfg;
  cfg.max_iterations = 200;
  std::size_t runs = 0;
  std::size_t l1_ok = 0;
  std::size_t en_ok = 0;
  auto check = [&](std::span<const Candidate> cands) {
    if (cands.empty()) return;
    ++runs;
    const auto& en = cands[select_candidate(cands, DecisionRule::en)];
    const auto& l1 = cands[select_candidate(cands, DecisionRule::l1)];
    l1_ok += l1.l1 <= en.l1 ? 1 : 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cands) best = std::min(best, c.elastic_net_score);
    en_ok += en.elastic_net_score == best ? 1 : 0;
  };
  for (const auto& t : targets) check(ead_attack_recorded(f.net, t.x, t.label, cfg).candidates);
  // synthetic candidate sets with deliberate ties
  Rng rng(606);
  std::uniform_int_distribution<int> n(1, 30);
  std::uniform_int_distribution<int> level(1, 8);
  for (int i = 0; i < 200; ++i) {
    std::vector<Candidate> cands(n(rng));
    for (auto& c : cands) {
      c.l1 = level(rng) * 0.25;
      c.l2 = level(rng) * 0.125;
      c.elastic_net_score = 0.1 * c.l1 + c.l2 * c.l2;
    }
    check(cands);
  }
  return {runs > 0 && l1_ok == runs && en_ok == runs,
          fmt("%zu candidate sets: L1 rule dominates in %zu, EN winner is brute-force argmin in %zu", runs, l1_ok,
              en_ok)};
}

/// 7. Rank AUC equals brute-force pair counting, with ties.
Outcome auc_oracle() {
  Rng rng(707);
  std::uniform_int_distribution<int> len(1, 50);
  std::uniform_int_distribution<int> level(0, 12);
  std::size_t exact = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pos(len(rng));
    std::vector<double> neg(len(rng));
    for (auto& v : pos) v = level(rng) / 12.0;
    for (auto& v : neg) v = level(rng) / 12.0;
    double wins = 0.0;
    for (double p : pos) {
      for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
    }
    exact += auc(pos, neg) == wins / static_cast<double>(pos.size() * neg.size()) ? 1 : 0;
  }
  return {exact == 200, fmt("%zu/200 instances bit-identical to brute force", exact)};
}

/// Shared oblivious + ensemble run for criteria 8 and 9.
struct MnistObliviousRun {
  std::vector<ReportRow> oblivious;
  std::vector<ReportRow> ensemble;
};

const MnistObliviousRun& mnist_oblivious_run() {
  static const MnistObliviousRun run = [] {
    ExperimentConfig cfg = mnist_config("mnist_oblivious");
    cfg.kappa_list = {0, 10, 20, 30, 40};
    Experiment exp(cfg, &std::cerr);
    MnistObliviousRun r;
    r.oblivious = exp.run_oblivious();
    r.ensemble = exp.run_ensemble();
    return r;
  }();
  return run;
}

const ReportRow& at_kappa(const std::vector<ReportRow>& rows, double kappa) {
  for (const auto& r : rows) {
    if (r.kappa == kappa) return r;
  }
  throw std::runtime_error("no report row at kappa " + format_kappa(kappa));
}

/// 8. Oblivious AUC at kappa 0 beats kappa 30 by at least 3 points.
Outcome trend_confidence() {
  const auto& run = mnist_oblivious_run();
  const auto& k0 = at_kappa(run.oblivious, 0);
  const auto& k30 = at_kappa(run.oblivious, 30);
  const double gap = k0.auc - k30.auc;
  return {k0.n > 0 && k30.n > 0 && gap >= 0.03,
          fmt("AUC k=0 %.2f%% (n=%zu), k=30 %.2f%% (n=%zu), gap %.2f points (need >= 3)", 100 * k0.auc, k0.n,
              100 * k30.auc, k30.n, 100 * gap)};
}

/// 9. Ensemble-trained detector at kappa 0 does not beat the single-kappa one.
Outcome trend_ensemble() {
  const auto& run = mnist_oblivious_run();
  const auto& single = at_kappa(run.oblivious, 0);
  const auto& ens = at_kappa(run.ensemble, 0);
  return {single.n > 0 && ens.n > 0 && ens.auc <= single.auc,
          fmt("AUC at k=0: ensemble %.2f%% vs single %.2f%%", 100 * ens.auc, 100 * single.auc)};
}

/// 10. Transfer: accuracy without detection falls with kappa; joint-count bounds.
Outcome trend_transfer() {
  ExperimentConfig cfg = mnist_config("mnist_transfer");
  cfg.kappa_list = {0, 20, 40};
  Experiment exp(cfg, &std::cerr);
  const auto rows = exp.run_transfer();
  bool monotone = rows.size() == 3;
  bool bounds = true;
  std::string detail = "w/o detection:";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const double wo = r.classification_rate_wo_detection.value_or(-1.0);
    const double post = r.post_detection_classification_rate.value_or(2.0);
    detail += fmt(" k=%s %.2f%% (n=%zu, post %.2f%%, detected %.2f%%)", format_kappa(r.kappa).c_str(), 100 * wo, r.n,
                  100 * post, 100 * r.detection_rate);
    bounds = bounds && post <= wo && post <= 1.0 - r.detection_rate + 1e-12;
    if (i > 0) monotone = monotone && wo <= rows[i - 1].classification_rate_wo_detection.value_or(-1.0);
    monotone = monotone && r.n > 0;
  }
  return {monotone && bounds, detail + (bounds ? "; bounds hold" : "; bounds VIOLATED")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// 11. Two oblivious runs with the same config and seed give identical reports.
Outcome determinism() {
  std::string reports[2];
  for (int i = 0; i < 2; ++i) {
    ExperimentConfig cfg = mnist_config("determinism_" + std::to_string(i));
    cfg.kappa_list = {0, 10};
    cfg.n_targets = 100;
    cfg.target_model.train.epochs = 10;
    Experiment exp(cfg);
    exp.run_oblivious();
    reports[i] = slurp(cfg.out_dir / "reports" / "oblivious_cw.csv");
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same, fmt("report CSVs %s (%zu bytes)", same ? "byte-identical" : "DIFFER", reports[0].size())};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "LID estimator analytic check", lid_analytic},
      {2, "LID estimator uniform-ball recovery", lid_uniform_ball},
      {3, "input gradient vs finite differences", gradient_check},
      {4, "EAD objective reduces to C&W at beta=0", ead_cw_reduction},
      {5, "attack validity on blob classifier", attack_validity},
      {6, "EN/L1 decision rules", decision_rules},
      {7, "rank AUC equals brute force", auc_oracle},
      {8, "trend A: confidence degrades LID detection", trend_confidence},
      {9, "trend B: ensemble training does not help at kappa=0", trend_ensemble},
      {10, "trend C: transfer weakens detection", trend_transfer},
      {11, "determinism of oblivious reports", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
              << fmt("%.1f", secs) << " s)" << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
