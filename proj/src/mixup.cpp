#include "negmix/mixup.hpp"

namespace negmix {

namespace {

struct MixedBatch {
  Var embeddings;  // k x D
  Mat lambdas;     // k x 1
};

MixedBatch blend(Tape& t, Var embeddings, const std::vector<MixupPair>& pairs,
                 bool negative) {
  std::vector<int> cand, part;
  Mat lam(static_cast<Eigen::Index>(pairs.size()), 1);
  Mat lam1(static_cast<Eigen::Index>(pairs.size()), 1);
  for (size_t k = 0; k < pairs.size(); ++k) {
    const MixupPair& p = pairs[k];
    check(0 <= p.candidate && p.candidate < embeddings.value().rows() &&
              0 <= p.partner && p.partner < embeddings.value().rows(),
          "mixup: node index out of range");
    check(0.0 <= p.lambda && p.lambda <= 1.0, "mixup: lambda out of [0,1]");
    cand.push_back(p.candidate);
    part.push_back(p.partner);
    lam(static_cast<Eigen::Index>(k), 0) = p.lambda;
    lam1(static_cast<Eigen::Index>(k), 0) = 1.0 - p.lambda;
  }
  Var hc = t.row_scale(t.gather_rows(embeddings, cand), t.constant(lam));
  Var hp = t.row_scale(t.gather_rows(embeddings, part), t.constant(lam1));
  MixedBatch out;
  out.embeddings = negative ? t.subtract(hc, hp) : t.add(hc, hp);
  out.lambdas = lam;
  return out;
}

Var safe_log(Tape& t, Var v) { return t.log(t.clamp(v, 1e-12, 2.0)); }

}  // namespace

std::vector<MixupPair> draw_mixup_pairs(const std::vector<int>& candidates,
                                        const std::vector<int>& candidate_labels,
                                        const std::vector<int>& labeled,
                                        const std::vector<int>& full_labels,
                                        double alpha, Pcg32& rng) {
  check(candidate_labels.size() == candidates.size(),
        "draw_mixup_pairs: candidate label count mismatch");
  check(!labeled.empty() || candidates.empty(),
        "draw_mixup_pairs: no labeled partners available");
  check(alpha > 0.0, "draw_mixup_pairs: alpha must be positive");
  std::vector<MixupPair> pairs;
  pairs.reserve(candidates.size());
  for (size_t k = 0; k < candidates.size(); ++k) {
    MixupPair p;
    p.candidate = candidates[k];
    p.candidate_label = candidate_labels[k];
    p.partner = labeled[static_cast<size_t>(
        rng.uniform_int(static_cast<int>(labeled.size())))];
    p.partner_label = full_labels[static_cast<size_t>(p.partner)];
    p.lambda = rng.beta(alpha, alpha);
    pairs.push_back(p);
  }
  return pairs;
}

std::optional<Var> positive_mixup_loss(Tape& t, Var embeddings,
                                       const ModelVars& m,
                                       const std::vector<MixupPair>& pairs,
                                       int classes_out) {
  if (pairs.empty()) return std::nullopt;
  MixedBatch batch = blend(t, embeddings, pairs, /*negative=*/false);
  Var probs = classify(t, batch.embeddings, m);
  check(probs.value().cols() == classes_out,
        "positive_mixup_loss: classifier width mismatch");

  Mat targets = Mat::Zero(static_cast<Eigen::Index>(pairs.size()), classes_out);
  for (size_t k = 0; k < pairs.size(); ++k) {
    const MixupPair& p = pairs[k];
    check(0 <= p.candidate_label && p.candidate_label < classes_out,
          "positive_mixup_loss: candidate label out of range");
    check(0 <= p.partner_label && p.partner_label < classes_out,
          "positive_mixup_loss: partner label out of range");
    targets(static_cast<Eigen::Index>(k), p.candidate_label) += p.lambda;
    targets(static_cast<Eigen::Index>(k), p.partner_label) += 1.0 - p.lambda;
  }
  Var weighted = t.mul(t.constant(targets), safe_log(t, probs));
  return t.negate(t.mean_scalar(t.row_sum(weighted)));
}

NegativeMixupLosses negative_mixup_loss(Tape& t, Var embeddings,
                                        const ModelVars& m,
                                        const std::vector<MixupPair>& pairs,
                                        int classes_out) {
  NegativeMixupLosses out;
  if (pairs.empty()) return out;
  MixedBatch batch = blend(t, embeddings, pairs, /*negative=*/true);
  Var probs = classify(t, batch.embeddings, m);
  check(probs.value().cols() == classes_out,
        "negative_mixup_loss: classifier width mismatch");

  std::vector<int> unknown_col(pairs.size(), classes_out - 1);
  std::vector<int> partner_col;
  Mat lam = batch.lambdas;
  Mat lam1 = Mat::Ones(lam.rows(), 1) - lam;
  for (const MixupPair& p : pairs) {
    check(0 <= p.partner_label && p.partner_label < classes_out - 1,
          "negative_mixup_loss: partner label must be a known class");
    partner_col.push_back(p.partner_label);
  }

  Var log_unknown = safe_log(t, t.take_per_row(probs, unknown_col));
  out.positive =
      t.negate(t.mean_scalar(t.mul(t.constant(lam), log_unknown)));

  Var p_partner = t.take_per_row(probs, partner_col);
  Var one_minus = t.subtract(t.constant(Mat::Ones(p_partner.rows(), 1)), p_partner);
  Var log_rest = safe_log(t, one_minus);
  out.negative =
      t.negate(t.mean_scalar(t.mul(t.constant(lam1), log_rest)));
  return out;
}

}  // namespace negmix
