#include "lidadv/attack.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>

#include "lidadv/error.hpp"

namespace lidadv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Adam constants of the reference C&W implementation.
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Keeps atanh finite for pixels sitting on the box boundary.
constexpr double kTanhShrink = 0.999999;

std::size_t best_other_class(std::span<const double> logits, std::size_t true_label) {
  if (logits.size() < 2) throw InvalidInputError("margin needs at least two classes");
  if (true_label >= logits.size()) throw InvalidInputError("true label out of range");
  std::size_t best = true_label == 0 ? 1 : 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != true_label && logits[j] > logits[best]) best = j;
  }
  return best;
}

bool attack_succeeded(std::span<const double> logits, std::size_t true_label, double kappa) {
  return achieved_margin(logits, true_label) >= kappa && argmax(logits) != true_label;
}

/// Bisection over the loss constant c: grow by 10x until the first success,
/// then bisect between the largest failing and smallest succeeding values.
class ConstantSearch {
 public:
  explicit ConstantSearch(const AttackConfig& cfg)
      : c_(cfg.c_init), upper_(cfg.c_max), c_max_(cfg.c_max) {}

  [[nodiscard]] double current() const { return c_; }

  void update(bool success) {
    if (success) {
      upper_ = std::min(upper_, c_);
      if (upper_ < c_max_) c_ = 0.5 * (lower_ + upper_);
    } else {
      lower_ = std::max(lower_, c_);
      c_ = upper_ < c_max_ ? 0.5 * (lower_ + upper_) : std::min(c_ * 10.0, c_max_);
    }
  }

 private:
  double c_;
  double lower_ = 0.0;
  double upper_;
  double c_max_;
};

/// Objective-stall detector shared by both attacks.
class EarlyAbort {
 public:
  EarlyAbort(const AttackConfig& cfg)
      : enabled_(cfg.abort_early), period_(std::max<std::size_t>(1, cfg.max_iterations / 10)) {}

  bool should_stop(std::size_t iteration, double objective) {
    if (!enabled_ || iteration == 0 || iteration % period_ != 0) return false;
    if (objective > previous_ * 0.9999) return true;
    previous_ = objective;
    return false;
  }

 private:
  bool enabled_;
  std::size_t period_;
  double previous_ = kInf;
};

Tensor clamp_to_box(const Tensor& x, Box box) {
  Tensor out = x;
  for (double& v : out.values()) v = box.clamp(v);
  return out;
}

AdversarialResult make_result(const Network& net, const Tensor& x, std::size_t true_label,
                              Tensor adversarial, double c, std::size_t iterations,
                              const AttackConfig& cfg) {
  AdversarialResult r;
  const Tensor z = logits(net, adversarial);
  r.original = x;
  r.delta = adversarial - x;
  r.adversarial = std::move(adversarial);
  r.true_label = true_label;
  r.achieved_margin = achieved_margin(z.values(), true_label);
  r.success = attack_succeeded(z.values(), true_label, cfg.kappa);
  r.beta = cfg.beta;
  r.l1 = l1_norm(r.delta.values());
  r.l2 = l2_norm(r.delta.values());
  r.elastic_net_score = elastic_net_score(r.delta.values(), cfg.beta);
  r.c_used = c;
  r.iterations_used = iterations;
  return r;
}

void check_inputs(const Network& net, const Tensor& x, std::size_t true_label,
                  const AttackConfig& cfg) {
  cfg.validate();
  if (x.size() != net.input_dim()) throw ShapeError("attack input does not match network");
  if (true_label >= net.num_classes()) throw InvalidInputError("true label out of range");
}

/// The unperturbed input, when it already clears the margin.
std::optional<AdversarialResult> zero_perturbation(const Network& net, const Tensor& x,
                                                   std::size_t true_label,
                                                   const AttackConfig& cfg) {
  const Tensor start = clamp_to_box(x, cfg.box);
  const Tensor z = logits(net, start);
  if (!attack_succeeded(z.values(), true_label, cfg.kappa)) return std::nullopt;
  return make_result(net, x, true_label, start, cfg.c_init, 0, cfg);
}

RecordedAttack ead_search(const Network& net, const Tensor& x, std::size_t true_label,
                          const AttackConfig& cfg, bool keep_all) {
  check_inputs(net, x, true_label, cfg);
  if (auto zero = zero_perturbation(net, x, true_label, cfg)) {
    RecordedAttack out{*zero, {}};
    if (keep_all) {
      out.candidates.push_back({zero->adversarial, zero->achieved_margin, zero->l1, zero->l2,
                                zero->elastic_net_score, zero->c_used, 0});
    }
    return out;
  }

  const MarginLoss loss(true_label, cfg.kappa);
  const Tensor start = clamp_to_box(x, cfg.box);
  const std::size_t n = x.size();

  std::vector<Candidate> all;
  std::optional<Candidate> best_en;
  std::optional<Candidate> best_l1;
  Tensor last = start;
  double last_c = cfg.c_init;

  ConstantSearch search(cfg);
  std::size_t global_iter = 0;
  for (std::size_t step = 0; step < cfg.binary_search_steps; ++step) {
    const double c = search.current();
    EarlyAbort abort(cfg);
    bool step_success = false;

    Tensor current = start;
    Tensor slack = start;
    double current_obj = c * loss.value(logits(net, current).values()) +
                         elastic_net_score((current - x).values(), cfg.beta);
    std::size_t momentum_k = 0;

    for (std::size_t it = 0; it < cfg.max_iterations; ++it, ++global_iter) {
      const double frac = static_cast<double>(it) / static_cast<double>(cfg.max_iterations);
      const double lr = cfg.learning_rate * std::sqrt(1.0 - frac);

      // gradient step on c*margin + ||.||^2 at the extrapolated point
      const LossGradient lg = loss_and_input_gradient(net, slack, loss);
      Tensor z = slack;
      for (std::size_t i = 0; i < n; ++i) {
        z[i] -= lr * (c * lg.gradient[i] + 2.0 * (slack[i] - x[i]));
      }
      Tensor next = shrink(z, x, cfg.beta * lr, cfg.box);

      const Tensor next_logits = logits(net, next);
      const Tensor delta = next - x;
      const double en = elastic_net_score(delta.values(), cfg.beta);
      const double next_obj = c * loss.value(next_logits.values()) + en;

      if (attack_succeeded(next_logits.values(), true_label, cfg.kappa)) {
        step_success = true;
        Candidate cand{next, achieved_margin(next_logits.values(), true_label),
                       l1_norm(delta.values()), l2_norm(delta.values()), en, c, global_iter};
        if (!best_en || cand.elastic_net_score < best_en->elastic_net_score) best_en = cand;
        if (!best_l1 || cand.l1 < best_l1->l1) best_l1 = cand;
        if (keep_all) all.push_back(std::move(cand));
      }

      if (next_obj > current_obj) {
        slack = next;  // restart momentum
        momentum_k = 0;
      } else {
        ++momentum_k;
        const double mom = static_cast<double>(momentum_k) / static_cast<double>(momentum_k + 3);
        slack = next;
        for (std::size_t i = 0; i < n; ++i) slack[i] += mom * (next[i] - current[i]);
      }
      current = std::move(next);
      current_obj = next_obj;

      if (abort.should_stop(it, next_obj)) {
        ++global_iter;
        break;
      }
    }
    last = current;
    last_c = c;
    search.update(step_success);
  }

  const std::optional<Candidate>& chosen = cfg.rule == DecisionRule::en ? best_en : best_l1;
  RecordedAttack out;
  if (chosen) {
    out.result = make_result(net, x, true_label, chosen->adversarial, chosen->c, global_iter, cfg);
  } else {
    out.result = make_result(net, x, true_label, last, last_c, global_iter, cfg);
  }
  out.candidates = std::move(all);
  return out;
}

}  // namespace

std::string_view to_string(AttackMethod m) { return m == AttackMethod::cw ? "cw" : "ead"; }
std::string_view to_string(DecisionRule r) { return r == DecisionRule::en ? "en" : "l1"; }

AttackMethod parse_attack_method(std::string_view s) {
  if (s == "cw") return AttackMethod::cw;
  if (s == "ead") return AttackMethod::ead;
  throw InvalidInputError("unknown attack '" + std::string(s) + "' (expected cw or ead)");
}

DecisionRule parse_decision_rule(std::string_view s) {
  if (s == "en" || s == "EN") return DecisionRule::en;
  if (s == "l1" || s == "L1") return DecisionRule::l1;
  throw InvalidInputError("unknown decision rule '" + std::string(s) + "' (expected en or l1)");
}

void AttackConfig::validate() const {
  if (!(kappa >= 0.0)) throw InvalidInputError("kappa must be >= 0");
  if (!(beta >= 0.0)) throw InvalidInputError("beta must be >= 0");
  if (!(c_init > 0.0) || !(c_max > 0.0) || c_init > c_max) {
    throw InvalidInputError("need 0 < c_init <= c_max");
  }
  if (!(learning_rate > 0.0)) throw InvalidInputError("learning_rate must be positive");
  if (max_iterations == 0 || binary_search_steps == 0) {
    throw InvalidInputError("iteration budgets must be positive");
  }
  if (!(box.lo <= box.hi)) throw InvalidInputError("box is empty");
}

double achieved_margin(std::span<const double> logits, std::size_t true_label) {
  const std::size_t other = best_other_class(logits, true_label);
  return logits[other] - logits[true_label];
}

double margin_loss(std::span<const double> logits, std::size_t true_label, double kappa) {
  return std::max(-achieved_margin(logits, true_label), -kappa);
}

double elastic_net_score(std::span<const double> delta, double beta) {
  return beta * l1_norm(delta) + squared_l2_norm(delta);
}

Tensor shrink(const Tensor& z, const Tensor& origin, double beta, Box box) {
  require_same_shape(z, origin, "shrink");
  Tensor out = z;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double diff = z[i] - origin[i];
    if (diff > beta) {
      out[i] = std::min(z[i] - beta, box.hi);
    } else if (diff < -beta) {
      out[i] = std::max(z[i] + beta, box.lo);
    } else {
      out[i] = origin[i];
    }
  }
  return out;
}

double MarginLoss::value(std::span<const double> logits) const {
  return margin_loss(logits, label_, kappa_);
}

void MarginLoss::gradient(std::span<const double> logits, std::span<double> grad) const {
  const std::size_t other = best_other_class(logits, label_);
  std::fill(grad.begin(), grad.end(), 0.0);
  if (logits[label_] - logits[other] > -kappa_) {
    grad[label_] = 1.0;
    grad[other] = -1.0;
  }
}

double cw_objective(const Network& net, const Tensor& x, std::size_t true_label,
                    const Tensor& adversarial, double c, double kappa) {
  const Tensor delta = adversarial - x;
  return squared_l2_norm(delta.values()) +
         c * margin_loss(logits(net, adversarial).values(), true_label, kappa);
}

double ead_objective(const Network& net, const Tensor& x, std::size_t true_label,
                     const Tensor& adversarial, double c, double kappa, double beta) {
  const Tensor delta = adversarial - x;
  return c * margin_loss(logits(net, adversarial).values(), true_label, kappa) +
         elastic_net_score(delta.values(), beta);
}

AdversarialResult cw_l2_attack(const Network& net, const Tensor& x, std::size_t true_label,
                               const AttackConfig& cfg) {
  check_inputs(net, x, true_label, cfg);
  if (auto zero = zero_perturbation(net, x, true_label, cfg)) return *zero;

  const std::size_t n = x.size();
  const double half_range = 0.5 * (cfg.box.hi - cfg.box.lo);
  const double mid = 0.5 * (cfg.box.hi + cfg.box.lo);
  const MarginLoss loss(true_label, cfg.kappa);

  using Array = Eigen::ArrayXd;
  const Eigen::Map<const Array> x_arr(x.values().data(), static_cast<Eigen::Index>(n));
  const Array w0 = ((x_arr.max(cfg.box.lo).min(cfg.box.hi) - mid) /
                    (half_range > 0.0 ? half_range : 1.0) * kTanhShrink)
                       .atanh();

  std::optional<Tensor> best;
  double best_l2sq = kInf;
  double best_c = cfg.c_init;
  Tensor last = x;
  double last_c = cfg.c_init;

  ConstantSearch search(cfg);
  std::size_t total_iter = 0;
  Array w(w0.size()), m(w0.size()), v(w0.size()), tanh_w(w0.size());
  Tensor adv({n});
  Eigen::Map<Array> adv_arr(adv.values().data(), static_cast<Eigen::Index>(n));
  for (std::size_t step = 0; step < cfg.binary_search_steps; ++step) {
    const double c = search.current();
    w = w0;
    m.setZero();
    v.setZero();
    EarlyAbort abort(cfg);
    bool step_success = false;
    double b1_pow = 1.0;
    double b2_pow = 1.0;

    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
      ++total_iter;
      tanh_w = w.tanh();
      adv_arr = (tanh_w * half_range + mid).max(cfg.box.lo).min(cfg.box.hi);
      const LossGradient lg = loss_and_input_gradient(net, adv, loss);
      const double l2sq = (adv_arr - x_arr).square().sum();
      const double objective = l2sq + c * lg.value;

      if (attack_succeeded(lg.logits.values(), true_label, cfg.kappa)) {
        step_success = true;
        if (l2sq < best_l2sq) {
          best_l2sq = l2sq;
          best = adv;
          best_c = c;
        }
      }
      if (abort.should_stop(it, objective)) break;

      // chain rule through x = tanh(w) * half_range + mid, then an Adam step
      const Eigen::Map<const Array> loss_grad(lg.gradient.values().data(), static_cast<Eigen::Index>(n));
      const Array g = (2.0 * (adv_arr - x_arr) + c * loss_grad) * half_range * (1.0 - tanh_w.square());
      b1_pow *= kBeta1;
      b2_pow *= kBeta2;
      m = kBeta1 * m + (1.0 - kBeta1) * g;
      v = kBeta2 * v + (1.0 - kBeta2) * g.square();
      w -= cfg.learning_rate * (m / (1.0 - b1_pow)) / ((v / (1.0 - b2_pow)).sqrt() + kAdamEps);
    }
    last = adv;
    last_c = c;
    search.update(step_success);
  }

  if (best) return make_result(net, x, true_label, std::move(*best), best_c, total_iter, cfg);
  return make_result(net, x, true_label, std::move(last), last_c, total_iter, cfg);
}

AdversarialResult ead_attack(const Network& net, const Tensor& x, std::size_t true_label,
                             const AttackConfig& cfg) {
  return ead_search(net, x, true_label, cfg, false).result;
}

RecordedAttack ead_attack_recorded(const Network& net, const Tensor& x, std::size_t true_label,
                                   const AttackConfig& cfg) {
  return ead_search(net, x, true_label, cfg, true);
}

std::size_t select_candidate(std::span<const Candidate> candidates, DecisionRule rule) {
  if (candidates.empty()) throw InvalidInputError("no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double a = rule == DecisionRule::en ? candidates[i].elastic_net_score : candidates[i].l1;
    const double b =
        rule == DecisionRule::en ? candidates[best].elastic_net_score : candidates[best].l1;
    if (a < b) best = i;
  }
  return best;
}

AdversarialResult assess_adversarial(const Network& net, const Tensor& x, std::size_t true_label,
                                     Tensor adversarial, const AttackConfig& cfg, double c_used,
                                     std::size_t iterations) {
  require_same_shape(x, adversarial, "assess_adversarial");
  return make_result(net, x, true_label, std::move(adversarial), c_used, iterations, cfg);
}

AdversarialResult run_attack(AttackMethod method, const Network& net, const Tensor& x,
                             std::size_t true_label, const AttackConfig& cfg) {
  return method == AttackMethod::cw ? cw_l2_attack(net, x, true_label, cfg)
                                    : ead_attack(net, x, true_label, cfg);
}

std::vector<AdversarialResult> run_attacks(AttackMethod method, const Network& net,
                                           std::span<const Tensor> xs,
                                           std::span<const std::size_t> labels,
                                           const AttackConfig& cfg, std::size_t threads) {
  if (xs.size() != labels.size()) throw InvalidInputError("inputs and labels differ in length");
  std::vector<AdversarialResult> out(xs.size());
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, xs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = run_attack(method, net, xs[i], labels[i], cfg);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < xs.size(); i += threads) {
            out[i] = run_attack(method, net, xs[i], labels[i], cfg);
          }
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_attack_csv(std::span<const AttackRecord> records, std::ostream& out) {
  out << "sample_id,attack,kappa,beta,rule,success,margin,l1,l2,en_score,c_used\n";
  const auto old_precision = out.precision(17);
  for (const auto& rec : records) {
    const auto& r = rec.result;
    out << rec.sample_id << ',' << to_string(rec.method) << ',' << rec.kappa << ',' << r.beta << ','
        << to_string(rec.rule) << ',' << (r.success ? 1 : 0) << ',' << r.achieved_margin << ','
        << r.l1 << ',' << r.l2 << ',' << r.elastic_net_score << ',' << r.c_used << '\n';
  }
  out.precision(old_precision);
  if (!out) throw IoError("failed writing attack CSV");
}

}  // namespace lidadv
