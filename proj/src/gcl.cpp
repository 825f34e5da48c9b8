#include "negmix/gcl.hpp"

#include <algorithm>
#include <numeric>

namespace negmix {

namespace {

// Sum of per-anchor NT-Xent losses with anchors at layer a and positives at
// layer b. The positive pair sits on the diagonal of the cross-layer
// similarity table; same-layer self-similarity is excluded from the
// denominator.
Var ntxent_anchor_sum(Tape& t, const PrototypeSet& ps, int a, int b) {
  double inv_tau = 1.0 / ps.tau;
  Var e_same = t.exp(t.scale(t.cosine_pairs(ps.prototypes[a], ps.prototypes[a]), inv_tau));
  Var e_cross = t.exp(t.scale(t.cosine_pairs(ps.prototypes[a], ps.prototypes[b]), inv_tau));
  Var pos = t.diagonal(e_cross);
  Var denom = t.add(t.subtract(t.row_sum(e_same), t.diagonal(e_same)), t.row_sum(e_cross));
  return t.sum_scalar(t.subtract(t.log(denom), t.log(pos)));
}

Var n2p_pair_loss(Tape& t, Var anchors, const PrototypeSet& ps,
                  const std::vector<int>& own_row, int p, int q) {
  double inv_tau = 1.0 / ps.tau;
  Var e_p = t.exp(t.scale(t.cosine_pairs(anchors, ps.prototypes[p]), inv_tau));
  Var e_q = t.exp(t.scale(t.cosine_pairs(anchors, ps.prototypes[q]), inv_tau));
  Var numer = t.scale(t.add(t.take_per_row(e_p, own_row), t.take_per_row(e_q, own_row)), 0.5);
  Var denom = t.add(t.row_sum(e_p), t.row_sum(e_q));
  return t.mean_scalar(t.subtract(t.log(denom), t.log(numer)));
}

std::vector<int> other_layers(int layers, int pivot) {
  std::vector<int> out;
  for (int q = 0; q < layers; ++q)
    if (q != pivot) out.push_back(q);
  return out;
}

Var normalize_pairs(Tape& t, const std::vector<Var>& pair_losses, int layers,
                    GclPairNorm norm) {
  if (layers == 2) return pair_losses[0];
  Var total = pair_losses[0];
  for (size_t i = 1; i < pair_losses.size(); ++i) total = t.add(total, pair_losses[i]);
  double div = norm == GclPairNorm::kL ? layers : layers - 1;
  return t.scale(total, 1.0 / div);
}

}  // namespace

PrototypeSet compute_prototypes(Tape& tape, const std::vector<Var>& layer_embeddings,
                                const std::vector<int>& labels_effective,
                                int classes_out, double tau) {
  check(!layer_embeddings.empty(), "compute_prototypes: no embedding layers");
  check(classes_out >= 1, "compute_prototypes: classes_out must be positive");
  check(tau > 0.0, "compute_prototypes: temperature must be positive");
  const long n = layer_embeddings[0].rows();
  check(static_cast<long>(labels_effective.size()) == n,
        "compute_prototypes: label count does not match embedding rows");
  for (const Var& e : layer_embeddings)
    check(e.rows() == n, "compute_prototypes: layers disagree on node count");
  for (int y : labels_effective)
    check(y >= 0 && y < classes_out, "compute_prototypes: label out of range");

  PrototypeSet ps;
  ps.classes_out = classes_out;
  ps.tau = tau;
  ps.class_to_row.assign(static_cast<size_t>(classes_out), -1);

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return labels_effective[static_cast<size_t>(a)] < labels_effective[static_cast<size_t>(b)];
  });
  std::vector<int> segment(static_cast<size_t>(n));
  for (size_t i = 0; i < order.size(); ++i) {
    int y = labels_effective[static_cast<size_t>(order[i])];
    if (ps.present.empty() || ps.present.back() != y) {
      ps.class_to_row[static_cast<size_t>(y)] = static_cast<int>(ps.present.size());
      ps.present.push_back(y);
    }
    segment[i] = static_cast<int>(ps.present.size()) - 1;
  }

  for (const Var& e : layer_embeddings) {
    Var sorted = tape.gather_rows(e, order);
    ps.prototypes.push_back(
        tape.segment_mean(sorted, segment, static_cast<int>(ps.present.size())));
  }
  return ps;
}

Var p2p_pair_loss(Tape& tape, const PrototypeSet& protos, int layer_a, int layer_b) {
  int layers = static_cast<int>(protos.prototypes.size());
  check(layer_a >= 0 && layer_a < layers && layer_b >= 0 && layer_b < layers &&
            layer_a != layer_b,
        "p2p_pair_loss: bad layer pair");
  check(protos.present.size() >= 2, "p2p_pair_loss: needs at least two classes");
  Var sum = tape.add(ntxent_anchor_sum(tape, protos, layer_a, layer_b),
                     ntxent_anchor_sum(tape, protos, layer_b, layer_a));
  return tape.scale(sum, 1.0 / (2.0 * static_cast<double>(protos.present.size())));
}

std::optional<Var> p2p_loss(Tape& tape, const PrototypeSet& protos, int pivot_layer,
                            GclPairNorm norm) {
  int layers = static_cast<int>(protos.prototypes.size());
  check(pivot_layer >= 0 && pivot_layer < layers, "p2p_loss: pivot layer out of range");
  if (layers < 2) {
    log_info("p2p loss skipped: single layer");
    return std::nullopt;
  }
  if (protos.present.size() < 2) {
    log_info("p2p loss skipped: fewer than two classes present");
    return std::nullopt;
  }
  std::vector<Var> pair_losses;
  for (int q : other_layers(layers, pivot_layer))
    pair_losses.push_back(p2p_pair_loss(tape, protos, pivot_layer, q));
  return normalize_pairs(tape, pair_losses, layers, norm);
}

std::optional<Var> n2p_loss(Tape& tape, const std::vector<Var>& layer_embeddings,
                            const PrototypeSet& protos,
                            const std::vector<int>& labels_effective, int pivot_layer,
                            GclPairNorm norm) {
  int layers = static_cast<int>(protos.prototypes.size());
  check(static_cast<int>(layer_embeddings.size()) == layers,
        "n2p_loss: embedding layer count does not match prototypes");
  check(pivot_layer >= 0 && pivot_layer < layers, "n2p_loss: pivot layer out of range");
  const long n = layers > 0 ? layer_embeddings[0].rows() : 0;
  check(static_cast<long>(labels_effective.size()) == n,
        "n2p_loss: label count does not match embedding rows");
  if (layers < 2) {
    log_info("n2p loss skipped: single layer");
    return std::nullopt;
  }
  if (protos.present.size() < 2) {
    log_info("n2p loss skipped: fewer than two classes present");
    return std::nullopt;
  }

  // Anchor rows whose own-class prototype exists (always all of them when the
  // prototypes came from these same labels).
  std::vector<int> keep, own_row;
  for (long i = 0; i < n; ++i) {
    int row = protos.class_to_row[static_cast<size_t>(labels_effective[static_cast<size_t>(i)])];
    if (row < 0) continue;
    keep.push_back(static_cast<int>(i));
    own_row.push_back(row);
  }
  if (keep.empty()) {
    log_info("n2p loss skipped: no anchor has a present prototype");
    return std::nullopt;
  }
  Var anchors = static_cast<long>(keep.size()) == n
                    ? layer_embeddings[static_cast<size_t>(pivot_layer)]
                    : tape.gather_rows(layer_embeddings[static_cast<size_t>(pivot_layer)], keep);

  std::vector<Var> pair_losses;
  for (int q : other_layers(layers, pivot_layer))
    pair_losses.push_back(n2p_pair_loss(tape, anchors, protos, own_row, pivot_layer, q));
  return normalize_pairs(tape, pair_losses, layers, norm);
}

}  // namespace negmix
