#pragma once

#include <optional>
#include <vector>

#include "negmix/common.hpp"
#include "negmix/tape.hpp"

namespace negmix {

// Normalization constant applied to the sum over layer pairs when there are
// more than two layers (with two layers the single pair is used as is).
enum class GclPairNorm { kL, kLMinusOne };

struct PrototypeSet {
  std::vector<Var> prototypes;    // per layer: P x width, rows ordered by class id
  std::vector<int> present;       // class ids with at least one member, ascending
  std::vector<int> class_to_row;  // class id -> prototype row, -1 when absent
  int classes_out = 0;
  double tau = 1.0;
};

// Per-layer, per-class mean embedding. Differentiable through the mean; the
// label assignment itself is treated as constant. Classes with no members are
// simply absent from the set.
PrototypeSet compute_prototypes(Tape& tape, const std::vector<Var>& layer_embeddings,
                                const std::vector<int>& labels_effective,
                                int classes_out, double tau);

// Cross-layer NT-Xent between the prototype tables of two layers: each anchor's
// positive is its own class at the other layer, negatives are every other-class
// prototype at both layers. Anchors are taken at both layers and averaged.
Var p2p_pair_loss(Tape& tape, const PrototypeSet& protos, int layer_a, int layer_b);

// Prototype-to-prototype loss over all (pivot, other) layer pairs. Returns
// nullopt (skipped) with fewer than two present classes or fewer than two
// layers.
std::optional<Var> p2p_loss(Tape& tape, const PrototypeSet& protos, int pivot_layer,
                            GclPairNorm norm = GclPairNorm::kL);

// Node-to-prototype loss: every node, anchored at the pivot layer, is pulled
// toward its own class prototype at both layers of each pair and pushed from
// all prototypes. Same skip rules and pair normalization as p2p_loss.
std::optional<Var> n2p_loss(Tape& tape, const std::vector<Var>& layer_embeddings,
                            const PrototypeSet& protos,
                            const std::vector<int>& labels_effective, int pivot_layer,
                            GclPairNorm norm = GclPairNorm::kL);

}  // namespace negmix
