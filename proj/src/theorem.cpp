#include "negmix/theorem.hpp"

#include <cmath>

namespace negmix {

namespace {

constexpr double kMinDelta = 1e-14;
constexpr double kProbFloor = 1e-6;

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

SignedQuantity quantity(const char* name, double value, int expected) {
  SignedQuantity q;
  q.name = name;
  q.value = value;
  q.expected_sign = expected;
  q.pass = sign_of(value) == expected && std::abs(value) > kMinDelta;
  return q;
}

void finish(SignReport& r) {
  r.pass = true;
  for (const SignedQuantity& q : r.quantities) r.pass = r.pass && q.pass;
}

// New probability of class c after one step s - eps*grad, minus the old one.
double prob_delta(const Vec& logits, const Vec& grad, double eps, int c) {
  Vec stepped = logits - eps * grad;
  return softmax_vec(stepped)(c) - softmax_vec(logits)(c);
}

bool in_open_unit(const Vec& probs) {
  return probs.minCoeff() >= kProbFloor && probs.maxCoeff() <= 1.0 - kProbFloor;
}

// Shared bracket of the closed forms: sum over the other classes of
// p-mix[k]/p[k], plus (1 - p-mix[c])/(1 - p[c]) for the class in question.
double bracket(const Vec& pmix, const Vec& p, int c) {
  double s = 0.0;
  for (int k = 0; k < static_cast<int>(p.size()); ++k)
    if (k != c) s += pmix(k) / p(k);
  return s + (1.0 - pmix(c)) / (1.0 - p(c));
}

}  // namespace

Vec softmax_vec(const Vec& logits) {
  Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

void TheoremInstance::validate() const {
  check(logits_i.size() >= 3, "instance: need at least three classes");
  check(logits_i.size() == logits_j.size(), "instance: logit lengths differ");
  check(label_j >= 0 && label_j < classes_out() - 1,
        "instance: label must be a known class");
  check(lambda > 0.0 && lambda <= 1.0, "instance: lambda must lie in (0, 1]");
  check(epsilon > 0.0, "instance: epsilon must be positive");
  check(logits_i.allFinite() && logits_j.allFinite(),
        "instance: logits must be finite");
}

TheoremInstance sample_instance(int classes_out, Pcg32& rng) {
  check(classes_out >= 3, "sample_instance: need at least three classes");
  TheoremInstance inst;
  for (;;) {
    inst.logits_i = Vec(classes_out);
    inst.logits_j = Vec(classes_out);
    for (int k = 0; k < classes_out; ++k) {
      inst.logits_i(k) = rng.normal();
      inst.logits_j(k) = rng.normal();
    }
    inst.label_j = rng.uniform_int(classes_out - 1);
    inst.lambda = rng.uniform(0.1, 0.9);
    Vec pi = softmax_vec(inst.logits_i);
    Vec pj = softmax_vec(inst.logits_j);
    Vec sum = inst.lambda * inst.logits_i + (1.0 - inst.lambda) * inst.logits_j;
    Vec diff = inst.lambda * inst.logits_i - (1.0 - inst.lambda) * inst.logits_j;
    if (in_open_unit(pi) && in_open_unit(pj) && in_open_unit(softmax_vec(sum)) &&
        in_open_unit(softmax_vec(diff)))
      return inst;
  }
}

SignReport negative_mixup_step_test(const TheoremInstance& inst) {
  inst.validate();
  check(inst.epsilon <= 1e-4, "step test: epsilon must be at most 1e-4");
  const int unknown = inst.classes_out() - 1;
  const int y = inst.label_j;
  const double lam = inst.lambda;
  Vec pmix = softmax_vec((lam * inst.logits_i - (1.0 - lam) * inst.logits_j).eval());

  SignReport r;
  // Unknown-class pull: -lambda * log p-mix[unknown].
  Vec g_mix = lam * pmix;
  g_mix(unknown) -= lam;
  Vec gi = lam * g_mix;
  Vec gj = -(1.0 - lam) * g_mix;
  r.quantities.push_back(
      quantity("dp_i_unknown", prob_delta(inst.logits_i, gi, inst.epsilon, unknown), +1));
  r.quantities.push_back(
      quantity("dp_j_unknown", prob_delta(inst.logits_j, gj, inst.epsilon, unknown), -1));

  // Label-class push: -(1-lambda) * log(1 - p-mix[label]).
  double cfac = pmix(y) / (1.0 - pmix(y));
  Vec e_minus = -pmix;
  e_minus(y) += 1.0;
  Vec g_mix2 = (1.0 - lam) * cfac * e_minus;
  Vec gi2 = lam * g_mix2;
  Vec gj2 = -(1.0 - lam) * g_mix2;
  r.quantities.push_back(
      quantity("dp_i_label", prob_delta(inst.logits_i, gi2, inst.epsilon, y), -1));
  r.quantities.push_back(
      quantity("dp_j_label", prob_delta(inst.logits_j, gj2, inst.epsilon, y), +1));
  finish(r);
  return r;
}

SignReport conventional_mixup_step_test(const TheoremInstance& inst) {
  inst.validate();
  check(inst.epsilon <= 1e-4, "step test: epsilon must be at most 1e-4");
  const int unknown = inst.classes_out() - 1;
  const int y = inst.label_j;
  const double lam = inst.lambda;
  Vec pmix = softmax_vec((lam * inst.logits_i + (1.0 - lam) * inst.logits_j).eval());

  SignReport r;
  // Unknown-class part of the soft target.
  Vec g_mix = lam * pmix;
  g_mix(unknown) -= lam;
  Vec gi = lam * g_mix;
  Vec gj = (1.0 - lam) * g_mix;
  r.quantities.push_back(
      quantity("dp_i_unknown", prob_delta(inst.logits_i, gi, inst.epsilon, unknown), +1));
  r.quantities.push_back(
      quantity("dp_j_unknown", prob_delta(inst.logits_j, gj, inst.epsilon, unknown), +1));

  // Label-class part: -(1-lambda) * log p-mix[label].
  Vec g_mix2 = (1.0 - lam) * pmix;
  g_mix2(y) -= (1.0 - lam);
  Vec gi2 = lam * g_mix2;
  Vec gj2 = (1.0 - lam) * g_mix2;
  r.quantities.push_back(
      quantity("dp_i_label", prob_delta(inst.logits_i, gi2, inst.epsilon, y), +1));
  r.quantities.push_back(
      quantity("dp_j_label", prob_delta(inst.logits_j, gj2, inst.epsilon, y), +1));
  finish(r);
  return r;
}

SignReport closed_form_sign_eval(const TheoremInstance& inst) {
  inst.validate();
  const int unknown = inst.classes_out() - 1;
  const int y = inst.label_j;
  const double lam = inst.lambda;
  Vec pi = softmax_vec(inst.logits_i);
  Vec pj = softmax_vec(inst.logits_j);
  Vec pm_sum = softmax_vec((lam * inst.logits_i + (1.0 - lam) * inst.logits_j).eval());
  Vec pm_diff = softmax_vec((lam * inst.logits_i - (1.0 - lam) * inst.logits_j).eval());

  SignReport r;
  // Conventional blend: every derivative is negative, so a minimizing step
  // raises all four probabilities at once.
  r.quantities.push_back(quantity(
      "conv_dL_dp_i_unknown",
      -lam * lam / pi(unknown) * bracket(pm_sum, pi, unknown), -1));
  r.quantities.push_back(quantity(
      "conv_dL_dp_j_unknown",
      lam * (lam - 1.0) / pj(unknown) * bracket(pm_sum, pj, unknown), -1));
  r.quantities.push_back(quantity(
      "conv_dL_dp_j_label",
      -(1.0 - lam) * (1.0 - lam) / pj(y) * bracket(pm_sum, pj, y), -1));
  r.quantities.push_back(quantity(
      "conv_dL_dp_i_label",
      lam * (lam - 1.0) / pi(y) * bracket(pm_sum, pi, y), -1));

  // Negative blend: the candidate's derivatives keep their sign while the
  // labeled node's flip, separating the two nodes.
  double cfac = pm_diff(y) / (1.0 - pm_diff(y));
  r.quantities.push_back(quantity(
      "neg_dL_dp_i_unknown",
      -lam * lam / pi(unknown) * bracket(pm_diff, pi, unknown), -1));
  r.quantities.push_back(quantity(
      "neg_dL_dp_j_unknown",
      lam * (1.0 - lam) / pj(unknown) * bracket(pm_diff, pj, unknown), +1));
  r.quantities.push_back(quantity(
      "neg_dL_dp_j_label",
      -(1.0 - lam) * (1.0 - lam) * cfac / pj(y) * bracket(pm_diff, pj, y), -1));
  r.quantities.push_back(quantity(
      "neg_dL_dp_i_label",
      (1.0 - lam) * lam * cfac / pi(y) * bracket(pm_diff, pi, y), +1));
  finish(r);
  return r;
}

}  // namespace negmix
