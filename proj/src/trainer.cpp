#include "negmix/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "negmix/io.hpp"
#include "negmix/mixup.hpp"
#include "negmix/ood.hpp"
#include "negmix/rng.hpp"

namespace negmix {

namespace {

struct AdamState {
  std::vector<Mat> m, v;
  long t = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit AdamState(ModelParams& p) {
    for (const NamedParam& e : param_entries(p)) {
      m.push_back(Mat::Zero(e.value->rows(), e.value->cols()));
      v.push_back(Mat::Zero(e.value->rows(), e.value->cols()));
    }
  }

  // Decoupled form: the decay is applied to the parameter directly, not mixed
  // into the gradient moments.
  void step(ModelParams& p, const std::vector<Var>& vars, double lr, double wd) {
    std::vector<NamedParam> entries = param_entries(p);
    check(entries.size() == vars.size() && entries.size() == m.size(),
          "adam: parameter list changed shape");
    ++t;
    double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    for (size_t k = 0; k < entries.size(); ++k) {
      const Mat& g = vars[k].grad();
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g;
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g.cwiseProduct(g).eval();
      Mat update = ((m[k].array() / bc1) / ((v[k].array() / bc2).sqrt() + kEps)).matrix();
      *entries[k].value -= lr * update + lr * wd * (*entries[k].value);
    }
  }
};

double scalar(const Var& v) { return v.value()(0, 0); }

double plain_ce(const Mat& probs, const std::vector<int>& labels,
                const std::vector<int>& nodes) {
  double s = 0.0;
  for (int v : nodes) {
    double p = probs(v, labels[static_cast<size_t>(v)]);
    s -= std::log(std::min(std::max(p, 1e-12), 1.0));
  }
  return s / static_cast<double>(nodes.size());
}

void accumulate(Tape& tape, std::optional<Var>& acc, const Var& term) {
  acc = acc ? tape.add(*acc, term) : term;
}

}  // namespace

void TrainConfig::validate() const {
  check(heads >= 1 && layers >= 1 && embed_dim >= 1,
        "config: heads, layers, and embed_dim must be at least 1");
  check(learning_rate > 0.0, "config: learning_rate must be positive");
  check(weight_decay >= 0.0, "config: weight_decay must be nonnegative");
  check(epochs >= 1, "config: epochs must be at least 1");
  check(rho_percent > 0.0 && rho_percent <= 100.0,
        "config: rho_percent must lie in (0, 100]");
  check(tau > 0.0, "config: tau must be positive");
  check(gamma >= 0.0 && eta >= 0.0 && delta >= 0.0 && beta >= 0.0,
        "config: loss weights must be nonnegative");
  check(beta_alpha > 0.0, "config: beta_alpha must be positive");
  check(warmup_epochs >= 0, "config: warmup_epochs must be nonnegative");
  check(!(conventional_ood_mixup && selected_ood_no_mixup),
        "config: conventional_ood_mixup and selected_ood_no_mixup are exclusive");
}

TrainConfig preset_config(const std::string& name) {
  TrainConfig c;  // defaults already carry rho=10, L=2, F'=16, lr=1e-2, tau=1
  c.dataset_name = name;
  if (name == "cora") {
    c.heads = 2; c.weight_decay = 1e-3; c.gamma = 0.1; c.eta = 0.1; c.delta = 1; c.beta = 1;
  } else if (name == "citeseer") {
    c.heads = 4; c.weight_decay = 1e-3; c.gamma = 1; c.eta = 0.1; c.delta = 1; c.beta = 10;
  } else if (name == "pubmed") {
    c.heads = 4; c.weight_decay = 1e-3; c.gamma = 0.1; c.eta = 0.1; c.delta = 10; c.beta = 10;
  } else if (name == "amazon_computers") {
    c.heads = 2; c.weight_decay = 1e-4; c.gamma = 1; c.eta = 1; c.delta = 10; c.beta = 10;
  } else if (name == "amazon_photo") {
    c.heads = 2; c.weight_decay = 1e-3; c.gamma = 0.1; c.eta = 0.1; c.delta = 10; c.beta = 1;
  } else if (name == "coauthor_cs") {
    c.heads = 4; c.weight_decay = 1e-3; c.gamma = 1; c.eta = 0.1; c.delta = 10; c.beta = 10;
  } else if (name == "wikics") {
    c.heads = 2; c.weight_decay = 1e-3; c.gamma = 1; c.eta = 0.1; c.delta = 1; c.beta = 1;
  } else if (name == "arxiv") {
    c.heads = 4; c.weight_decay = 1e-4; c.gamma = 1; c.eta = 1; c.delta = 1; c.beta = 0.1;
  } else {
    throw Error("unknown preset: " + name);
  }
  return c;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "cora",           "citeseer",     "pubmed", "amazon_computers",
      "amazon_photo",   "coauthor_cs",  "wikics", "arxiv"};
  return names;
}

TrainResult train(const Graph& graph, const OpenSetSplit& split,
                  const TrainConfig& config) {
  config.validate();
  check(graph.num_nodes > 0, "train: empty graph");
  check(static_cast<int>(split.labels.size()) == graph.num_nodes,
        "train: split does not match the graph");
  check(!split.train_nodes.empty(), "train: empty training set");
  const int known = split.known_classes;
  check(known >= 1, "train: split has no known classes");
  const int classes_out = known + 1;

  EncoderConfig ec = config.encoder();
  ModelParams params = ModelParams::init(
      ec, static_cast<int>(graph.features.cols()), classes_out,
      config.classifier_bias, config.seed);
  AttentionIndex index = AttentionIndex::build(graph);
  AdamState adam(params);

  TrainResult out;
  out.best_val_loss = std::numeric_limits<double>::infinity();

  const std::vector<int>& labeled = split.train_nodes;
  const std::vector<int>& unlabeled = split.test_nodes;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Pcg32 rng(derive_seed(config.seed, "epoch-" + std::to_string(epoch)));
    int pivot = rng.uniform_int(config.layers);

    Tape tape;
    ModelVars mv = bind_model(tape, params);
    Var features = tape.constant(graph.features);
    EncodeResult enc = encode(tape, index, features, mv, ec);
    Var probs = classify(tape, enc.concat, mv);
    // Copy: ops appended below may reallocate the tape's node storage, so a
    // reference from value() must not be held across them.
    Mat probs_val = probs.value();

    EpochStats st;
    st.epoch = epoch;
    Var ce = cross_entropy_loss(tape, probs, split.labels, labeled);
    st.ce = scalar(ce);
    Var total = ce;

    bool past_warmup = epoch > config.warmup_epochs;
    bool want_pi = past_warmup && !config.no_pos_mixup && config.eta > 0.0;
    bool want_po = past_warmup && config.delta > 0.0;
    if (!config.conventional_ood_mixup && !config.selected_ood_no_mixup &&
        config.no_pos_learning && config.no_neg_learning)
      want_po = false;
    bool want_selection = config.gamma > 0.0 || want_pi || want_po;

    CandidateSets sets;
    OodScores scores;
    if (want_selection) {
      scores = ood_score(tape, graph, probs, known, config.entropy_renormalize);
      sets = config.rank_only
                 ? rank_only_selection(scores.values, probs_val, unlabeled,
                                       config.rho_percent, known)
                 : clustering_then_ranking(scores.values, probs_val, unlabeled,
                                           config.rho_percent, known,
                                           derive_seed(config.seed, "kmeans"));
      st.n_potential_ood = static_cast<int>(sets.potential_ood.size());
      st.n_potential_id = static_cast<int>(sets.potential_id.size());
    }

    if (config.gamma > 0.0) {
      auto oreg = ood_regularization_loss(tape, scores.score, labeled, sets.potential_ood);
      if (oreg) {
        st.oreg = scalar(*oreg);
        total = tape.add(total, tape.scale(*oreg, config.gamma));
      }
    }

    if (want_pi) {
      auto pairs = draw_mixup_pairs(sets.potential_id, sets.potential_id_label,
                                    labeled, split.labels, config.beta_alpha, rng);
      auto pi = positive_mixup_loss(tape, enc.concat, mv, pairs, classes_out);
      if (pi) {
        st.pi = scalar(*pi);
        total = tape.add(total, tape.scale(*pi, config.eta));
      }
    }

    if (want_po) {
      std::optional<Var> po;
      if (config.selected_ood_no_mixup) {
        if (!sets.potential_ood.empty()) {
          std::vector<int> pseudo = split.labels;
          for (int v : sets.potential_ood) pseudo[static_cast<size_t>(v)] = known;
          po = cross_entropy_loss(tape, probs, pseudo, sets.potential_ood);
        }
      } else {
        std::vector<int> po_labels(sets.potential_ood.size(), known);
        auto pairs = draw_mixup_pairs(sets.potential_ood, po_labels, labeled,
                                      split.labels, config.beta_alpha, rng);
        if (config.conventional_ood_mixup) {
          auto conv = positive_mixup_loss(tape, enc.concat, mv, pairs, classes_out);
          if (conv) po = *conv;
        } else {
          NegativeMixupLosses nl = negative_mixup_loss(tape, enc.concat, mv, pairs, classes_out);
          if (!config.no_pos_learning && nl.positive) accumulate(tape, po, *nl.positive);
          if (!config.no_neg_learning && nl.negative) accumulate(tape, po, *nl.negative);
        }
      }
      if (po) {
        st.po = scalar(*po);
        total = tape.add(total, tape.scale(*po, config.delta));
      }
    }

    if (config.beta > 0.0 && config.layers >= 2) {
      std::vector<int> effective = predict(probs_val);
      for (int v : labeled) effective[static_cast<size_t>(v)] = split.labels[static_cast<size_t>(v)];
      PrototypeSet protos =
          compute_prototypes(tape, enc.per_layer, effective, classes_out, config.tau);
      std::optional<Var> gcl;
      auto p2p = p2p_loss(tape, protos, pivot, config.gcl_pair_norm);
      if (p2p) accumulate(tape, gcl, *p2p);
      auto n2p = n2p_loss(tape, enc.per_layer, protos, effective, pivot, config.gcl_pair_norm);
      if (n2p) accumulate(tape, gcl, *n2p);
      if (gcl) {
        st.gcl = scalar(*gcl);
        total = tape.add(total, tape.scale(*gcl, config.beta));
      }
    }

    st.total = scalar(total);
    if (!std::isfinite(st.total))
      throw Error("training diverged at epoch " + std::to_string(epoch) +
                  ": total=" + fmt_double(st.total) + " ce=" + fmt_double(st.ce) +
                  " oreg=" + fmt_double(st.oreg) + " pi=" + fmt_double(st.pi) +
                  " po=" + fmt_double(st.po) + " gcl=" + fmt_double(st.gcl));

    // Validation loss is plain cross entropy on validation nodes: the other
    // terms are split-free, so scoring them "on validation" is ill-defined.
    st.val_loss = split.val_nodes.empty()
                      ? st.ce
                      : plain_ce(probs_val, split.labels, split.val_nodes);
    out.epochs.push_back(st);
    // The checkpoint keeps the parameters this epoch was evaluated with,
    // before the update below.
    if (st.val_loss < out.best_val_loss) {
      out.best_val_loss = st.val_loss;
      out.best_epoch = epoch;
      out.best_params = params;
    }
    log_debug("epoch " + std::to_string(epoch) + " total=" + fmt_double(st.total) +
              " val=" + fmt_double(st.val_loss));

    tape.backward(total);
    adam.step(params, mv.ordered, config.learning_rate, config.weight_decay);
  }
  return out;
}

EvalOutputs evaluate_model(const ModelParams& params, const Graph& graph,
                           const OpenSetSplit& split, const TrainConfig& config) {
  check(params.in_features == static_cast<int>(graph.features.cols()),
        "evaluate: feature width mismatch");
  const int known = split.known_classes;
  check(params.classes_out == known + 1, "evaluate: class count mismatch");
  check(static_cast<int>(split.labels.size()) == graph.num_nodes,
        "evaluate: split does not match the graph");

  Tape tape;
  ModelVars mv = bind_model(tape, params);
  AttentionIndex index = AttentionIndex::build(graph);
  EncodeResult enc = encode(tape, index, tape.constant(graph.features), mv, params.enc);
  Var probs = classify(tape, enc.concat, mv);
  Mat probs_val = probs.value();

  EvalOutputs out;
  out.predictions = predict(probs_val);
  if (config.score_punknown) {
    out.scores.resize(static_cast<size_t>(graph.num_nodes));
    for (int i = 0; i < graph.num_nodes; ++i)
      out.scores[static_cast<size_t>(i)] = probs_val(i, known);
  } else {
    out.scores = ood_score(tape, graph, probs, known, config.entropy_renormalize).values;
  }
  out.embeddings = enc.concat.value();

  std::vector<int> preds, truths;
  std::vector<double> test_scores;
  std::vector<std::uint8_t> is_ood;
  for (int v : split.test_nodes) {
    preds.push_back(out.predictions[static_cast<size_t>(v)]);
    truths.push_back(split.labels[static_cast<size_t>(v)]);
    test_scores.push_back(out.scores[static_cast<size_t>(v)]);
    is_ood.push_back(split.labels[static_cast<size_t>(v)] == known ? 1 : 0);
  }
  out.report = evaluate(preds, truths, test_scores, is_ood, known + 1);
  return out;
}

}  // namespace negmix
