#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lidadv/attack.hpp"
#include "lidadv/error.hpp"
#include "support.hpp"

namespace lidadv {
namespace {

using testing::BlobFixture;
using testing::make_blob_fixture;
using testing::random_network;
using testing::random_tensor;

const BlobFixture& blobs() {
  static const BlobFixture f = make_blob_fixture();
  return f;
}

std::vector<AttackTarget> blob_targets(std::size_t n) {
  return select_attack_targets(blobs().net, blobs().test, n, 99);
}

AttackConfig fast_config(double kappa) {
  AttackConfig cfg;
  cfg.kappa = kappa;
  cfg.max_iterations = 300;
  return cfg;
}

TEST(MarginLoss, Examples) {
  EXPECT_DOUBLE_EQ(margin_loss(std::vector<double>{3.0, 1.0, 0.5}, 0, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(margin_loss(std::vector<double>{1.0, 5.0}, 0, 20.0), -4.0);
  EXPECT_DOUBLE_EQ(margin_loss(std::vector<double>{1.0, 30.0}, 0, 20.0), -20.0);
}

TEST(MarginLoss, RejectsSingleClassAndBadLabel) {
  EXPECT_THROW(margin_loss(std::vector<double>{1.0}, 0, 0.0), InvalidInputError);
  EXPECT_THROW(margin_loss(std::vector<double>{1.0, 2.0}, 2, 0.0), InvalidInputError);
}

TEST(MarginLoss, GradientIsTrueMinusRunnerUp) {
  const MarginLoss loss(0, 5.0);
  std::vector<double> g(3);
  loss.gradient(std::vector<double>{3.0, 1.0, 2.0}, g);
  EXPECT_EQ(g, (std::vector<double>{1.0, 0.0, -1.0}));
  loss.gradient(std::vector<double>{0.0, 9.0, 2.0}, g);  // clamp active
  EXPECT_EQ(g, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(ElasticNetScore, Examples) {
  EXPECT_DOUBLE_EQ(elastic_net_score(std::vector<double>{0.0, 0.0}, 0.1), 0.0);
  EXPECT_NEAR(elastic_net_score(std::vector<double>{0.3, -0.4}, 0.1), 0.32, 1e-15);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Tensor d = random_tensor(9, rng, -1.0, 1.0);
    EXPECT_EQ(elastic_net_score(d.values(), 0.0), squared_l2_norm(d.values()));
  }
}

TEST(Shrink, Examples) {
  const Box box{};
  EXPECT_NEAR(shrink(Tensor::vector({0.58}), Tensor::vector({0.5}), 0.05, box)[0], 0.53, 1e-15);
  EXPECT_EQ(shrink(Tensor::vector({0.52}), Tensor::vector({0.5}), 0.05, box)[0], 0.5);
  EXPECT_EQ(shrink(Tensor::vector({0.40}), Tensor::vector({0.5}), 0.05, box)[0], 0.45);
  const Tensor z = Tensor::vector({-0.2, 0.3, 1.4});
  EXPECT_EQ(shrink(z, Tensor::vector({0.5, 0.5, 0.5}), 0.0, box).storage(), (std::vector<double>{0.0, 0.3, 1.0}));
  EXPECT_THROW(shrink(z, Tensor::vector({0.5}), 0.1, box), ShapeError);
}

TEST(Shrink, StaysInBoxAndMovesTowardOrigin) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Tensor z = random_tensor(6, rng, -0.5, 1.5);
    const Tensor o = random_tensor(6, rng);
    const Tensor s = shrink(z, o, 0.1, Box{});
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_TRUE(Box{}.contains(s[j]));
      EXPECT_LE(std::abs(s[j] - o[j]), std::max(std::abs(z[j] - o[j]), 0.0) + 1e-15);
    }
  }
}

TEST(Objectives, ElasticNetReducesToCwAtZeroBeta) {
  Rng rng(4);
  const Network net = random_network(rng, 5, 3, 2);
  const Tensor x = random_tensor(5, rng);
  std::normal_distribution<double> g(0.0, 0.2);
  for (int i = 0; i < 1000; ++i) {
    Tensor adv = x;
    for (std::size_t j = 0; j < adv.size(); ++j) adv[j] += g(rng);
    const double c = std::pow(10.0, static_cast<double>(i % 7) - 3.0);
    EXPECT_NEAR(ead_objective(net, x, 1, adv, c, 5.0, 0.0), cw_objective(net, x, 1, adv, c, 5.0), 1e-12);
  }
}

TEST(AttackConfig, Validation) {
  AttackConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.kappa = -1;
  EXPECT_THROW(cfg.validate(), InvalidInputError);
  cfg = AttackConfig{};
  cfg.beta = -0.1;
  EXPECT_THROW(cfg.validate(), InvalidInputError);
  cfg = AttackConfig{};
  cfg.c_init = 1e11;
  EXPECT_THROW(cfg.validate(), InvalidInputError);
  cfg = AttackConfig{};
  cfg.box = Box{1.0, 0.0};
  EXPECT_THROW(cfg.validate(), InvalidInputError);
}

void expect_valid(const AdversarialResult& r, const Network& net, const AttackConfig& cfg) {
  for (double v : r.adversarial.values()) ASSERT_TRUE(cfg.box.contains(v));
  const Tensor delta = r.adversarial - r.original;
  EXPECT_EQ(delta, r.delta);
  EXPECT_NEAR(r.l1, l1_norm(delta.values()), 1e-9);
  EXPECT_NEAR(r.l2, l2_norm(delta.values()), 1e-9);
  EXPECT_NEAR(r.elastic_net_score, elastic_net_score(delta.values(), r.beta), 1e-9);
  const Tensor z = logits(net, r.adversarial);
  EXPECT_NEAR(r.achieved_margin, achieved_margin(z.values(), r.true_label), 1e-12);
  if (r.success) {
    EXPECT_NE(argmax(z.values()), r.true_label);
    EXPECT_GE(r.achieved_margin, cfg.kappa - 1e-6);
  }
}

TEST(CwAttack, SucceedsOnBlobClassifier) {
  const auto targets = blob_targets(30);
  const AttackConfig cfg = fast_config(0.0);
  std::size_t ok = 0;
  for (const auto& t : targets) {
    const auto r = cw_l2_attack(blobs().net, t.x, t.label, cfg);
    expect_valid(r, blobs().net, cfg);
    ok += r.success ? 1 : 0;
  }
  EXPECT_GE(ok, 29u);
}

TEST(CwAttack, HigherConfidenceCostsMoreDistortion) {
  const auto targets = blob_targets(20);
  double l2_low = 0.0;
  double l2_high = 0.0;
  for (const auto& t : targets) {
    l2_low += cw_l2_attack(blobs().net, t.x, t.label, fast_config(0.0)).l2;
    l2_high += cw_l2_attack(blobs().net, t.x, t.label, fast_config(10.0)).l2;
  }
  EXPECT_GT(l2_high, l2_low);
}

TEST(CwAttack, MisclassifiedInputAdmitsZeroPerturbation) {
  const auto& f = blobs();
  // flip the label so the clean point is already "adversarial"
  const auto t = blob_targets(1).front();
  const std::size_t wrong = (t.label + 1) % f.train.num_classes;
  const auto r = cw_l2_attack(f.net, t.x, wrong, fast_config(0.0));
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.l2, 0.0);
}

TEST(CwAttack, IsDeterministic) {
  const auto t = blob_targets(1).front();
  const auto a = cw_l2_attack(blobs().net, t.x, t.label, fast_config(5.0));
  const auto b = cw_l2_attack(blobs().net, t.x, t.label, fast_config(5.0));
  EXPECT_EQ(a.adversarial, b.adversarial);
  EXPECT_EQ(a.c_used, b.c_used);
  EXPECT_EQ(a.iterations_used, b.iterations_used);
}

TEST(CwAttack, UnreachableMarginReportsFailure) {
  const auto t = blob_targets(1).front();
  AttackConfig cfg = fast_config(1e6);
  cfg.binary_search_steps = 3;
  cfg.max_iterations = 50;
  const auto r = cw_l2_attack(blobs().net, t.x, t.label, cfg);
  EXPECT_FALSE(r.success);
  expect_valid(r, blobs().net, cfg);
}

TEST(EadAttack, SucceedsAndIsSparserThanCw) {
  const auto targets = blob_targets(30);
  AttackConfig cfg = fast_config(0.0);
  cfg.beta = 0.1;
  std::size_t ok = 0;
  double l1_ead = 0.0;
  double l1_cw = 0.0;
  for (const auto& t : targets) {
    const auto r = ead_attack(blobs().net, t.x, t.label, cfg);
    expect_valid(r, blobs().net, cfg);
    ok += r.success ? 1 : 0;
    l1_ead += r.l1;
    l1_cw += cw_l2_attack(blobs().net, t.x, t.label, cfg).l1;
  }
  EXPECT_GE(ok, 29u);
  EXPECT_LE(l1_ead, l1_cw);
}

TEST(EadAttack, RuleWinnersOnRecordedCandidates) {
  const auto targets = blob_targets(10);
  AttackConfig cfg = fast_config(0.0);
  cfg.max_iterations = 100;
  for (const auto& t : targets) {
    const auto rec = ead_attack_recorded(blobs().net, t.x, t.label, cfg);
    ASSERT_FALSE(rec.candidates.empty());
    const auto& en = rec.candidates[select_candidate(rec.candidates, DecisionRule::en)];
    const auto& l1 = rec.candidates[select_candidate(rec.candidates, DecisionRule::l1)];
    EXPECT_LE(l1.l1, en.l1);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : rec.candidates) best = std::min(best, c.elastic_net_score);
    EXPECT_EQ(en.elastic_net_score, best);
    for (const auto& c : rec.candidates) EXPECT_GE(c.margin, cfg.kappa);
  }
}

TEST(EadAttack, RecordedResultMatchesPlainRun) {
  const auto t = blob_targets(1).front();
  AttackConfig cfg = fast_config(2.0);
  cfg.rule = DecisionRule::l1;
  const auto rec = ead_attack_recorded(blobs().net, t.x, t.label, cfg);
  const auto plain = ead_attack(blobs().net, t.x, t.label, cfg);
  EXPECT_EQ(rec.result.adversarial, plain.adversarial);
}

TEST(SelectCandidate, TiesGoToEarliestAndEmptyThrows) {
  std::vector<Candidate> c(3);
  c[0].elastic_net_score = 2.0;
  c[0].l1 = 1.0;
  c[1].elastic_net_score = 1.0;
  c[1].l1 = 1.0;
  c[2].elastic_net_score = 1.0;
  c[2].l1 = 0.5;
  EXPECT_EQ(select_candidate(c, DecisionRule::en), 1u);
  EXPECT_EQ(select_candidate(c, DecisionRule::l1), 2u);
  EXPECT_THROW(select_candidate(std::span<const Candidate>{}, DecisionRule::en), InvalidInputError);
}

TEST(RunAttacks, ThreadsDoNotChangeResults) {
  const auto targets = blob_targets(6);
  std::vector<Tensor> xs;
  std::vector<std::size_t> labels;
  for (const auto& t : targets) {
    xs.push_back(t.x);
    labels.push_back(t.label);
  }
  const AttackConfig cfg = fast_config(1.0);
  const auto one = run_attacks(AttackMethod::ead, blobs().net, xs, labels, cfg, 1);
  const auto three = run_attacks(AttackMethod::ead, blobs().net, xs, labels, cfg, 3);
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(one[i].adversarial, three[i].adversarial);
}

TEST(RunAttacks, PropagatesErrors) {
  const std::vector<Tensor> xs{Tensor::vector({0.5, 0.5})};
  const std::vector<std::size_t> labels{0};
  EXPECT_THROW(run_attacks(AttackMethod::cw, blobs().net, xs, labels, fast_config(0.0), 2), ShapeError);
}

TEST(AttackCsv, HeaderAndRow) {
  AttackRecord rec;
  rec.sample_id = 12;
  rec.method = AttackMethod::ead;
  rec.rule = DecisionRule::l1;
  rec.kappa = 10;
  rec.result.success = true;
  rec.result.beta = 0.1;
  rec.result.l1 = 0.5;
  std::ostringstream out;
  write_attack_csv(std::span<const AttackRecord>(&rec, 1), out);
  std::istringstream in(out.str());
  std::string header;
  std::string row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "sample_id,attack,kappa,beta,rule,success,margin,l1,l2,en_score,c_used");
  std::vector<std::string> cells;
  std::istringstream fields(row);
  for (std::string cell; std::getline(fields, cell, ',');) cells.push_back(cell);
  ASSERT_EQ(cells.size(), 11u);
  EXPECT_EQ(cells[0], "12");
  EXPECT_EQ(cells[1], "ead");
  EXPECT_EQ(std::stod(cells[2]), 10.0);
  EXPECT_EQ(std::stod(cells[3]), 0.1);
  EXPECT_EQ(cells[4], "l1");
  EXPECT_EQ(cells[5], "1");
  EXPECT_EQ(std::stod(cells[7]), 0.5);
}

TEST(Parsing, MethodsAndRules) {
  EXPECT_EQ(parse_attack_method("cw"), AttackMethod::cw);
  EXPECT_EQ(parse_attack_method("ead"), AttackMethod::ead);
  EXPECT_EQ(parse_decision_rule("en"), DecisionRule::en);
  EXPECT_EQ(parse_decision_rule("l1"), DecisionRule::l1);
  EXPECT_THROW(parse_attack_method("fgsm"), InvalidInputError);
}

}  // namespace
}  // namespace lidadv
