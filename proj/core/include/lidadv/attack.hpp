#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lidadv/network.hpp"
#include "lidadv/tensor.hpp"

namespace lidadv {

enum class AttackMethod { cw, ead };

/// Which successful iterate an EAD run returns.
enum class DecisionRule { en, l1 };

std::string_view to_string(AttackMethod m);
std::string_view to_string(DecisionRule r);
AttackMethod parse_attack_method(std::string_view s);
DecisionRule parse_decision_rule(std::string_view s);

struct AttackConfig {
  double kappa = 0.0;  // required logit margin
  double beta = 0.1;   // L1 weight (EAD only)
  std::size_t max_iterations = 1000;
  std::size_t binary_search_steps = 9;
  double c_init = 1e-3;
  double c_max = 1e10;
  double learning_rate = 1e-2;
  DecisionRule rule = DecisionRule::en;
  Box box{};
  /// Attacks draw no random numbers; the seed travels with results so a report
  /// can name the full configuration.
  std::uint64_t seed = 0;
  /// Stop a binary-search step once the objective stalls (checked every
  /// max_iterations/10 iterations).
  bool abort_early = true;

  /// Throws InvalidInputError on kappa < 0, beta < 0, c_init > c_max, an
  /// empty box or zero iteration budgets.
  void validate() const;
};

struct AdversarialResult {
  Tensor original;
  Tensor adversarial;
  Tensor delta;  // adversarial - original
  std::size_t true_label = 0;
  bool success = false;
  double achieved_margin = 0.0;  // max_{j != true} Z_j - Z_true at `adversarial`
  double beta = 0.0;             // weight used for elastic_net_score
  double l1 = 0.0;
  double l2 = 0.0;
  double elastic_net_score = 0.0;
  double c_used = 0.0;
  std::size_t iterations_used = 0;
};

/// A successful iterate recorded during a search.
struct Candidate {
  Tensor adversarial;
  double margin = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double elastic_net_score = 0.0;
  double c = 0.0;
  std::size_t iteration = 0;  // global iteration counter at which it was found
};

/// max(Z_true - max_{j != true} Z_j, -kappa). Throws InvalidInputError for a
/// single-class logit vector or an out-of-range label.
double margin_loss(std::span<const double> logits, std::size_t true_label, double kappa);

/// max_{j != true} Z_j - Z_true
double achieved_margin(std::span<const double> logits, std::size_t true_label);

/// beta * ||delta||_1 + ||delta||_2^2
double elastic_net_score(std::span<const double> delta, double beta);

/// Elementwise shrinkage-thresholding of `z` toward `origin` with threshold
/// `beta`, projected onto `box`.
Tensor shrink(const Tensor& z, const Tensor& origin, double beta, Box box);

/// Margin loss as a LogitLoss. The gradient is e_true - e_j* while the clamp
/// is inactive and zero otherwise.
class MarginLoss final : public LogitLoss {
 public:
  MarginLoss(std::size_t true_label, double kappa) : label_(true_label), kappa_(kappa) {}
  [[nodiscard]] double value(std::span<const double> logits) const override;
  void gradient(std::span<const double> logits, std::span<double> grad) const override;

 private:
  std::size_t label_;
  double kappa_;
};

/// ||adv - x||^2 + c * margin_loss(logits(adv))
double cw_objective(const Network& net, const Tensor& x, std::size_t true_label,
                    const Tensor& adversarial, double c, double kappa);

/// c * margin_loss(logits(adv)) + ||adv - x||^2 + beta * ||adv - x||_1
double ead_objective(const Network& net, const Tensor& x, std::size_t true_label,
                     const Tensor& adversarial, double c, double kappa, double beta);

AdversarialResult cw_l2_attack(const Network& net, const Tensor& x, std::size_t true_label,
                               const AttackConfig& cfg);

AdversarialResult ead_attack(const Network& net, const Tensor& x, std::size_t true_label,
                             const AttackConfig& cfg);

/// An EAD run together with every successful iterate it produced.
struct RecordedAttack {
  AdversarialResult result;
  std::vector<Candidate> candidates;
};

RecordedAttack ead_attack_recorded(const Network& net, const Tensor& x, std::size_t true_label,
                                   const AttackConfig& cfg);

/// Index of the candidate minimizing elastic-net score (EN) or L1 distortion
/// (L1); the earliest wins ties. Throws InvalidInputError on an empty set.
std::size_t select_candidate(std::span<const Candidate> candidates, DecisionRule rule);

/// Builds the result record for a given adversarial point: delta, norms,
/// margin and success are all recomputed from `adversarial`.
AdversarialResult assess_adversarial(const Network& net, const Tensor& x, std::size_t true_label,
                                     Tensor adversarial, const AttackConfig& cfg,
                                     double c_used = 0.0, std::size_t iterations = 0);

AdversarialResult run_attack(AttackMethod method, const Network& net, const Tensor& x,
                             std::size_t true_label, const AttackConfig& cfg);

/// Attacks every (x, label) pair. Samples are spread over `threads` workers;
/// the output order matches the input regardless of scheduling.
std::vector<AdversarialResult> run_attacks(AttackMethod method, const Network& net,
                                           std::span<const Tensor> xs,
                                           std::span<const std::size_t> labels,
                                           const AttackConfig& cfg, std::size_t threads = 1);

struct AttackRecord {
  std::size_t sample_id = 0;
  AttackMethod method = AttackMethod::cw;
  DecisionRule rule = DecisionRule::en;
  double kappa = 0.0;
  AdversarialResult result;
};

/// CSV with header
/// sample_id,attack,kappa,beta,rule,success,margin,l1,l2,en_score,c_used
void write_attack_csv(std::span<const AttackRecord> records, std::ostream& out);

}  // namespace lidadv
