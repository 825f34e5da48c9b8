#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "negmix/encoder.hpp"
#include "negmix/gcl.hpp"
#include "negmix/graph.hpp"
#include "negmix/metrics.hpp"

namespace negmix {

struct TrainConfig {
  // Model
  int heads = 2;       // attention heads per layer (K)
  int layers = 2;      // encoder depth (L)
  int embed_dim = 16;  // per-head width (F')
  bool classifier_bias = true;
  double attn_slope = 0.2;
  // Optimization
  double learning_rate = 1e-2;
  double weight_decay = 1e-3;
  int epochs = 1000;
  std::uint64_t seed = 0;
  // Method
  // Trade-off weights default to the most common per-dataset values
  // (equal to the wikics preset); presets override them per dataset.
  double rho_percent = 10.0;  // candidate quota, percent of the unlabeled set
  double tau = 1.0;           // contrastive temperature
  double gamma = 1.0;         // score-regularization weight
  double eta = 0.1;           // positive-mixup weight
  double delta = 1.0;         // positive/negative-learning weight
  double beta = 1.0;          // contrastive weight
  double beta_alpha = 1.0;    // Beta(alpha, alpha) for mixing coefficients
  int warmup_epochs = 0;      // epochs to run before any mixup term activates
  bool entropy_renormalize = true;
  bool score_punknown = false;  // detection score: unknown-class probability
                                // instead of the aggregated score
  GclPairNorm gcl_pair_norm = GclPairNorm::kL;
  std::string dataset_name;
  // Ablations
  bool no_pos_mixup = false;            // drop the positive-mixup term
  bool conventional_ood_mixup = false;  // blend candidates additively instead
  bool selected_ood_no_mixup = false;   // plain CE toward unknown, no blending
  bool no_pos_learning = false;         // drop the pull toward unknown
  bool no_neg_learning = false;         // drop the push off the partner class
  bool rank_only = false;               // skip clustering in candidate selection

  EncoderConfig encoder() const { return {layers, heads, embed_dim, attn_slope}; }
  void validate() const;  // throws Error on out-of-range fields
};

// Per-dataset hyperparameter table; throws on unknown name.
TrainConfig preset_config(const std::string& name);
const std::vector<std::string>& preset_names();

struct EpochStats {
  int epoch = 0;  // 1-based
  double ce = 0.0, oreg = 0.0, pi = 0.0, po = 0.0, gcl = 0.0;  // raw term values
  double total = 0.0;     // weighted sum actually minimized
  // Cross entropy on the validation mask (training cross entropy when the
  // validation set is empty); checkpoint selector.
  double val_loss = 0.0;
  int n_potential_ood = 0;
  int n_potential_id = 0;
};

struct TrainResult {
  ModelParams best_params;   // parameters at the lowest-validation-loss epoch
  int best_epoch = 0;        // 1-based; first epoch on ties
  double best_val_loss = 0.0;
  std::vector<EpochStats> epochs;
};

// Full-batch training: every epoch encodes the whole graph, assembles the
// weighted loss (terms with zero weight or empty inputs are skipped and
// contribute exactly 0), and applies one decoupled-weight-decay Adam step.
// Throws on a non-finite total loss.
TrainResult train(const Graph& graph, const OpenSetSplit& split,
                  const TrainConfig& config);

struct EvalOutputs {
  EvalReport report;             // metrics over the test mask
  std::vector<int> predictions;  // every node, remapped label space
  std::vector<double> scores;    // every node, the configured detection score
  Mat embeddings;                // N x final_width concatenation
};

EvalOutputs evaluate_model(const ModelParams& params, const Graph& graph,
                           const OpenSetSplit& split, const TrainConfig& config);

}  // namespace negmix
