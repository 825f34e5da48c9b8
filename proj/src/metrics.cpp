#include "negmix/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace negmix {

namespace {

struct CoreStats {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassStats> per_class;
};

CoreStats core_stats(const std::vector<int>& preds, const std::vector<int>& truths,
                     int classes_out) {
  check(preds.size() == truths.size(), "metrics: prediction/truth size mismatch");
  check(!preds.empty(), "metrics: empty test set");
  check(classes_out >= 1, "metrics: classes_out must be positive");

  std::vector<long> tp(static_cast<size_t>(classes_out), 0);
  std::vector<long> support(static_cast<size_t>(classes_out), 0);
  std::vector<long> predicted(static_cast<size_t>(classes_out), 0);
  long correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    int p = preds[i], y = truths[i];
    check(p >= 0 && p < classes_out && y >= 0 && y < classes_out,
          "metrics: label out of range");
    ++support[static_cast<size_t>(y)];
    ++predicted[static_cast<size_t>(p)];
    if (p == y) {
      ++correct;
      ++tp[static_cast<size_t>(y)];
    }
  }

  CoreStats out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  out.per_class.resize(static_cast<size_t>(classes_out));
  for (size_t k = 0; k < out.per_class.size(); ++k) {
    ClassStats& c = out.per_class[k];
    c.support = support[k];
    c.predicted = predicted[k];
    if (predicted[k] > 0) c.precision = static_cast<double>(tp[k]) / predicted[k];
    if (support[k] > 0) c.recall = static_cast<double>(tp[k]) / support[k];
    if (predicted[k] > 0 && support[k] > 0 && c.precision + c.recall > 0)
      c.f1 = 2.0 * c.precision * c.recall / (c.precision + c.recall);
    out.macro_f1 += c.f1;
  }
  out.macro_f1 /= static_cast<double>(classes_out);
  return out;
}

void check_two_kinds(const std::vector<double>& scores,
                     const std::vector<std::uint8_t>& is_ood, long& n_ood, long& n_id) {
  check(scores.size() == is_ood.size(), "metrics: score/flag size mismatch");
  n_ood = std::count_if(is_ood.begin(), is_ood.end(), [](std::uint8_t f) { return f != 0; });
  n_id = static_cast<long>(is_ood.size()) - n_ood;
  check(n_ood >= 1 && n_id >= 1, "metrics: need at least one ID and one OOD node");
}

}  // namespace

std::pair<double, double> accuracy_macro_f1(const std::vector<int>& preds,
                                            const std::vector<int>& truths,
                                            const std::vector<std::uint8_t>& test_mask,
                                            int classes_out) {
  check(preds.size() == test_mask.size() && truths.size() == test_mask.size(),
        "metrics: mask size mismatch");
  std::vector<int> p, y;
  for (size_t i = 0; i < test_mask.size(); ++i) {
    if (!test_mask[i]) continue;
    p.push_back(preds[i]);
    y.push_back(truths[i]);
  }
  CoreStats s = core_stats(p, y, classes_out);
  return {s.accuracy, s.macro_f1};
}

double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& is_ood) {
  long n_ood = 0, n_id = 0;
  check_two_kinds(scores, is_ood, n_ood, n_id);

  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)]; });

  // Rank sum of the OOD group with average ranks across ties.
  double rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() &&
           scores[static_cast<size_t>(order[j])] == scores[static_cast<size_t>(order[i])])
      ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k)
      if (is_ood[static_cast<size_t>(order[k])]) rank_sum += avg_rank;
    i = j;
  }
  double u = rank_sum - static_cast<double>(n_ood) * (static_cast<double>(n_ood) + 1.0) / 2.0;
  return u / (static_cast<double>(n_ood) * static_cast<double>(n_id));
}

double fpr_at_95(const std::vector<double>& scores, const std::vector<std::uint8_t>& is_ood) {
  long n_ood = 0, n_id = 0;
  check_two_kinds(scores, is_ood, n_ood, n_id);

  std::vector<double> ood;
  ood.reserve(static_cast<size_t>(n_ood));
  for (size_t i = 0; i < scores.size(); ++i)
    if (is_ood[i]) ood.push_back(scores[i]);
  std::sort(ood.begin(), ood.end(), std::greater<double>());

  // Smallest k with k/n_ood >= 19/20, in exact integer arithmetic; the k-th
  // highest OOD score is then the largest threshold keeping recall >= 95%.
  long k = (19 * n_ood + 19) / 20;
  double t = ood[static_cast<size_t>(k - 1)];

  long false_positives = 0;
  for (size_t i = 0; i < scores.size(); ++i)
    if (!is_ood[i] && scores[i] >= t) ++false_positives;
  return static_cast<double>(false_positives) / static_cast<double>(n_id);
}

EvalReport evaluate(const std::vector<int>& preds, const std::vector<int>& truths,
                    const std::vector<double>& scores,
                    const std::vector<std::uint8_t>& is_ood, int classes_out) {
  check(preds.size() == scores.size() && preds.size() == is_ood.size(),
        "metrics: evaluate input size mismatch");
  CoreStats s = core_stats(preds, truths, classes_out);
  EvalReport r;
  r.accuracy = s.accuracy;
  r.macro_f1 = s.macro_f1;
  r.per_class = std::move(s.per_class);
  r.auroc = auroc(scores, is_ood);
  r.fpr_at_95 = fpr_at_95(scores, is_ood);
  r.n_test = static_cast<long>(preds.size());
  r.n_ood = std::count_if(is_ood.begin(), is_ood.end(), [](std::uint8_t f) { return f != 0; });
  return r;
}

}  // namespace negmix
