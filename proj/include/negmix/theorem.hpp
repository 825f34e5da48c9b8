#pragma once

#include <string>
#include <vector>

#include "negmix/common.hpp"
#include "negmix/rng.hpp"

namespace negmix {

// Logit-identity model for the gradient-direction experiments: a candidate
// (potential-OOD) node i and a labeled node j carry raw logit vectors, and a
// blended sample's logits are the same blend of those logits. That is exactly
// the bias-free linear classifier case, where embedding mixup and logit mixup
// coincide, so the experiments run on logits alone.
struct TheoremInstance {
  Vec logits_i;         // length classes_out, candidate node
  Vec logits_j;         // length classes_out, labeled node
  int label_j = 0;      // known class of node j, in [0, classes_out - 1)
  double lambda = 0.5;  // blend weight, (0, 1]; 1 decouples node j entirely
  double epsilon = 1e-4;  // gradient step size

  int classes_out() const { return static_cast<int>(logits_i.size()); }
  void validate() const;  // throws Error on malformed fields
};

// Standard-normal logits, label uniform over the known classes, lambda ~
// U(0.1, 0.9). Instances where any probability (raw or blended, either blend
// direction) leaves [1e-6, 1 - 1e-6] are rejected and redrawn.
TheoremInstance sample_instance(int classes_out, Pcg32& rng);

struct SignedQuantity {
  std::string name;
  double value = 0.0;
  int expected_sign = 0;  // +1 or -1
  bool pass = false;      // strict expected sign and |value| > 1e-14
};

struct SignReport {
  std::vector<SignedQuantity> quantities;
  bool pass = false;  // every quantity passed
};

// Negative blend s-mix = lambda*s_i - (1-lambda)*s_j. Each loss term gets one
// epsilon-sized gradient step on (s_i, s_j) from the original instance:
//   -lambda*log p-mix[unknown]      -> p_i,unknown up,  p_j,unknown down
//   -(1-lambda)*log(1-p-mix[label]) -> p_i,label  down, p_j,label  up
// The candidate and the labeled node move in opposite directions.
SignReport negative_mixup_step_test(const TheoremInstance& inst);

// Conventional blend s-mix = lambda*s_i + (1-lambda)*s_j with the matching
// soft-target terms; both nodes drift the same way on both terms, which is
// the failure mode the negative blend removes:
//   -lambda*log p-mix[unknown] -> p_i,unknown up, p_j,unknown up
//   -(1-lambda)*log p-mix[label] -> p_i,label up, p_j,label up
SignReport conventional_mixup_step_test(const TheoremInstance& inst);

// Evaluates the eight closed-form loss derivatives with respect to the nodes'
// own class probabilities (four per blend direction) and checks each strict
// inequality. A negative derivative means one minimizing step raises that
// probability; signs here are therefore opposite to the step-test deltas.
SignReport closed_form_sign_eval(const TheoremInstance& inst);

// Numerically stable softmax of a logit vector.
Vec softmax_vec(const Vec& logits);

}  // namespace negmix
