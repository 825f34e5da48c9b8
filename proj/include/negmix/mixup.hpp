#pragma once

#include <optional>
#include <vector>

#include "negmix/encoder.hpp"
#include "negmix/rng.hpp"
#include "negmix/tape.hpp"

namespace negmix {

// One synthetic training sample: a candidate node blended against a labeled
// partner with mixing weight lambda.
struct MixupPair {
  int candidate = -1;
  int partner = -1;
  double lambda = 0.5;
  int candidate_label = -1;  // pseudo-label (potential-ID) or unknown class
  int partner_label = -1;    // partner's ground-truth label
};

// One pair per candidate: partner uniform with replacement from the labeled
// pool, lambda ~ Beta(alpha, alpha). Per pair the partner is drawn before the
// lambda; the order is part of the determinism contract.
std::vector<MixupPair> draw_mixup_pairs(const std::vector<int>& candidates,
                                        const std::vector<int>& candidate_labels,
                                        const std::vector<int>& labeled,
                                        const std::vector<int>& full_labels,
                                        double alpha, Pcg32& rng);

// Positive mixup: embedding lambda*h_cand + (1-lambda)*h_partner classified
// against the blended soft target lambda*onehot(candidate_label) +
// (1-lambda)*onehot(partner_label). Used for potential-ID pairs and, as an
// ablation baseline, for potential-OOD pairs (candidate_label = unknown).
// Empty pair list -> nullopt.
std::optional<Var> positive_mixup_loss(Tape& t, Var embeddings,
                                       const ModelVars& m,
                                       const std::vector<MixupPair>& pairs,
                                       int classes_out);

struct NegativeMixupLosses {
  std::optional<Var> positive;  // -mean lambda * log p_unknown(mixed)
  std::optional<Var> negative;  // -mean (1-lambda) * log(1 - p_partner_label(mixed))
};

// Negative mixup: embedding lambda*h_cand - (1-lambda)*h_partner. The
// positive part pulls the blend toward the unknown class; the negative part
// pushes it away from the partner's class. Empty pair list -> both nullopt.
NegativeMixupLosses negative_mixup_loss(Tape& t, Var embeddings,
                                        const ModelVars& m,
                                        const std::vector<MixupPair>& pairs,
                                        int classes_out);

}  // namespace negmix
