#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "negmix/common.hpp"

namespace negmix {

struct ClassStats {
  double precision = 0.0;  // 0 when the class was never predicted
  double recall = 0.0;     // 0 when the class has no true members
  double f1 = 0.0;         // 0 when precision or recall is undefined
  long support = 0;
  long predicted = 0;
};

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double auroc = 0.0;
  double fpr_at_95 = 0.0;
  std::vector<ClassStats> per_class;  // exactly classes_out rows
  long n_test = 0;
  long n_ood = 0;
};

// Accuracy and unweighted-mean F1 over all classes_out classes on the masked
// nodes. preds and truths cover every node; the mask selects the test set.
std::pair<double, double> accuracy_macro_f1(const std::vector<int>& preds,
                                            const std::vector<int>& truths,
                                            const std::vector<std::uint8_t>& test_mask,
                                            int classes_out);

// Probability that a random OOD node outscores a random ID node, ties counted
// one half (Mann-Whitney form). Needs at least one node of each kind.
double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& is_ood);

// False-positive rate at 95% OOD recall: take the largest threshold t keeping
// at least 95% of OOD nodes at score >= t, then report the fraction of ID
// nodes with score >= t.
double fpr_at_95(const std::vector<double>& scores, const std::vector<std::uint8_t>& is_ood);

// Full report on compact test-set vectors (one entry per test node).
EvalReport evaluate(const std::vector<int>& preds, const std::vector<int>& truths,
                    const std::vector<double>& scores,
                    const std::vector<std::uint8_t>& is_ood, int classes_out);

}  // namespace negmix
