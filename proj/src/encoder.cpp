#include "negmix/encoder.hpp"

#include <algorithm>

#include "negmix/io.hpp"
#include "negmix/rng.hpp"

namespace negmix {

ModelParams ModelParams::init(const EncoderConfig& cfg, int in_features,
                              int classes_out, bool classifier_bias,
                              std::uint64_t seed) {
  check(cfg.layers >= 1 && cfg.heads >= 1 && cfg.embed_dim >= 1,
        "model init: layers, heads, embed_dim must be positive");
  check(in_features >= 1, "model init: in_features must be positive");
  check(classes_out >= 2, "model init: classes_out must be at least 2");
  ModelParams p;
  p.enc = cfg;
  p.in_features = in_features;
  p.classes_out = classes_out;
  p.classifier_bias = classifier_bias;
  p.W.resize(static_cast<size_t>(cfg.layers));
  p.attn_src.resize(static_cast<size_t>(cfg.layers));
  p.attn_dst.resize(static_cast<size_t>(cfg.layers));
  Pcg32 rng(derive_seed(seed, "init"));
  for (int l = 0; l < cfg.layers; ++l) {
    int in_dim = p.layer_in_dim(l);
    for (int h = 0; h < cfg.heads; ++h) {
      p.W[static_cast<size_t>(l)].push_back(
          glorot_uniform(in_dim, cfg.embed_dim, in_dim, cfg.embed_dim, rng));
      // The attention vector is one 2*embed_dim score parameter, stored as
      // its source/destination halves; both halves share its Glorot fan.
      p.attn_src[static_cast<size_t>(l)].push_back(
          glorot_uniform(cfg.embed_dim, 1, 2 * cfg.embed_dim, 1, rng));
      p.attn_dst[static_cast<size_t>(l)].push_back(
          glorot_uniform(cfg.embed_dim, 1, 2 * cfg.embed_dim, 1, rng));
    }
  }
  p.clf_W = glorot_uniform(p.final_width(), classes_out, p.final_width(),
                           classes_out, rng);
  p.clf_b = Mat::Zero(1, classes_out);
  return p;
}

std::vector<NamedParam> param_entries(ModelParams& p) {
  std::vector<NamedParam> out;
  for (int l = 0; l < p.enc.layers; ++l) {
    for (int h = 0; h < p.enc.heads; ++h) {
      std::string base = "enc.l" + std::to_string(l) + ".h" + std::to_string(h);
      out.push_back({base + ".W", &p.W[(size_t)l][(size_t)h]});
      out.push_back({base + ".a_src", &p.attn_src[(size_t)l][(size_t)h]});
      out.push_back({base + ".a_dst", &p.attn_dst[(size_t)l][(size_t)h]});
    }
  }
  out.push_back({"clf.W", &p.clf_W});
  if (p.classifier_bias) out.push_back({"clf.b", &p.clf_b});
  return out;
}

AttentionIndex AttentionIndex::build(const Graph& g) {
  AttentionIndex idx;
  idx.num_nodes = g.num_nodes;
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto& nbrs = g.neighbors[static_cast<size_t>(i)];
    bool placed = false;
    for (int j : nbrs) {
      if (!placed && i < j) {
        idx.src.push_back(i);
        idx.dst.push_back(i);
        placed = true;
      }
      idx.src.push_back(i);
      idx.dst.push_back(j);
    }
    if (!placed) {
      idx.src.push_back(i);
      idx.dst.push_back(i);
    }
  }
  return idx;
}

ModelVars bind_model(Tape& t, const ModelParams& p) {
  // Must mirror param_entries order exactly: `ordered` is what the optimizer
  // reads gradients from.
  ModelVars m;
  m.W.resize(p.W.size());
  m.attn_src.resize(p.W.size());
  m.attn_dst.resize(p.W.size());
  for (size_t l = 0; l < p.W.size(); ++l) {
    for (size_t h = 0; h < p.W[l].size(); ++h) {
      m.W[l].push_back(t.leaf(p.W[l][h]));
      m.attn_src[l].push_back(t.leaf(p.attn_src[l][h]));
      m.attn_dst[l].push_back(t.leaf(p.attn_dst[l][h]));
      m.ordered.push_back(m.W[l].back());
      m.ordered.push_back(m.attn_src[l].back());
      m.ordered.push_back(m.attn_dst[l].back());
    }
  }
  m.clf_W = t.leaf(p.clf_W);
  m.ordered.push_back(m.clf_W);
  if (p.classifier_bias) {
    m.clf_b = t.leaf(p.clf_b);
    m.ordered.push_back(m.clf_b);
  } else {
    m.clf_b = t.constant(Mat::Zero(1, p.classes_out));
  }
  return m;
}

EncodeResult encode(Tape& t, const AttentionIndex& index, Var features,
                    const ModelVars& m, const EncoderConfig& cfg) {
  check(static_cast<int>(m.W.size()) == cfg.layers,
        "encode: model/config layer mismatch");
  EncodeResult res;
  Var x = features;
  for (int l = 0; l < cfg.layers; ++l) {
    std::vector<Var> heads;
    for (int h = 0; h < cfg.heads; ++h) {
      Var wh = t.matmul(x, m.W[(size_t)l][(size_t)h]);           // N x F'
      Var s_src = t.matmul(wh, m.attn_src[(size_t)l][(size_t)h]);  // N x 1
      Var s_dst = t.matmul(wh, m.attn_dst[(size_t)l][(size_t)h]);  // N x 1
      Var e = t.leaky_relu(t.add(t.gather_rows(s_src, index.src),
                                 t.gather_rows(s_dst, index.dst)),
                           cfg.attn_slope);                        // E x 1
      Var alpha = t.segment_softmax(e, index.src);
      Var messages = t.row_scale(t.gather_rows(wh, index.dst), alpha);
      heads.push_back(t.segment_sum(messages, index.src, index.num_nodes));
    }
    Var layer_out = cfg.heads == 1 ? heads[0] : t.concat_cols(heads);
    if (l + 1 < cfg.layers) layer_out = t.elu(layer_out);
    res.per_layer.push_back(layer_out);
    x = layer_out;
  }
  res.concat = res.per_layer.size() == 1 ? res.per_layer[0]
                                         : t.concat_cols(res.per_layer);
  return res;
}

Var classify_logits(Tape& t, Var embeddings, const ModelVars& m) {
  Var logits = t.matmul(embeddings, m.clf_W);
  return t.add_rowvec(logits, m.clf_b);
}

Var classify(Tape& t, Var embeddings, const ModelVars& m) {
  return t.row_softmax(classify_logits(t, embeddings, m));
}

std::vector<int> predict(const Mat& probs) {
  std::vector<int> out(static_cast<size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c)
      if (probs(r, c) > probs(r, best)) best = static_cast<int>(c);
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

Var cross_entropy_loss(Tape& t, Var probs, const std::vector<int>& labels,
                       const std::vector<int>& nodes) {
  check(!nodes.empty(), "cross_entropy_loss: empty node set");
  std::vector<int> node_labels;
  node_labels.reserve(nodes.size());
  for (int n : nodes) {
    check(0 <= n && n < probs.value().rows(),
          "cross_entropy_loss: node index out of range");
    int y = labels[static_cast<size_t>(n)];
    check(0 <= y && y < probs.value().cols(),
          "cross_entropy_loss: label out of range");
    node_labels.push_back(y);
  }
  // Upper clamp bound sits above 1 so probabilities never hit the
  // zero-gradient clip region from above.
  Var lp = t.log(t.clamp(probs, 1e-12, 2.0));
  Var picked = t.take_per_row(t.gather_rows(lp, nodes), node_labels);
  return t.negate(t.mean_scalar(picked));
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& p,
                     const nlohmann::json& extra_meta) {
  nlohmann::ordered_json j;
  j["format"] = "negmix-checkpoint-v1";
  nlohmann::ordered_json meta;
  meta["layers"] = p.enc.layers;
  meta["heads"] = p.enc.heads;
  meta["embed_dim"] = p.enc.embed_dim;
  meta["attn_slope"] = p.enc.attn_slope;
  meta["in_features"] = p.in_features;
  meta["classes_out"] = p.classes_out;
  meta["classifier_bias"] = p.classifier_bias;
  for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it)
    meta[it.key()] = it.value();
  j["meta"] = meta;
  nlohmann::ordered_json params;
  ModelParams& mut = const_cast<ModelParams&>(p);
  for (const NamedParam& entry : param_entries(mut)) {
    nlohmann::ordered_json pj;
    pj["shape"] = {entry.value->rows(), entry.value->cols()};
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(entry.value->size()));
    for (Eigen::Index r = 0; r < entry.value->rows(); ++r)
      for (Eigen::Index c = 0; c < entry.value->cols(); ++c)
        flat.push_back((*entry.value)(r, c));
    pj["data"] = flat;
    params[entry.name] = pj;
  }
  j["params"] = params;
  write_text_file_atomic(path, j.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint parse error: " + std::string(e.what()));
  }
  check(j.value("format", "") == "negmix-checkpoint-v1",
        "checkpoint: unknown format");
  check(j.contains("meta") && j.contains("params"),
        "checkpoint: missing meta or params");
  const auto& meta = j["meta"];
  EncoderConfig cfg;
  cfg.layers = meta.at("layers").get<int>();
  cfg.heads = meta.at("heads").get<int>();
  cfg.embed_dim = meta.at("embed_dim").get<int>();
  cfg.attn_slope = meta.at("attn_slope").get<double>();
  LoadedCheckpoint out{
      ModelParams::init(cfg, meta.at("in_features").get<int>(),
                        meta.at("classes_out").get<int>(),
                        meta.at("classifier_bias").get<bool>(), 0),
      meta};
  for (const NamedParam& entry : param_entries(out.params)) {
    check(j["params"].contains(entry.name),
          "checkpoint: missing parameter " + entry.name);
    const auto& pj = j["params"][entry.name];
    auto shape = pj.at("shape").get<std::vector<Eigen::Index>>();
    check(shape.size() == 2 && shape[0] == entry.value->rows() &&
              shape[1] == entry.value->cols(),
          "checkpoint: shape mismatch for " + entry.name);
    auto flat = pj.at("data").get<std::vector<double>>();
    check(static_cast<Eigen::Index>(flat.size()) == entry.value->size(),
          "checkpoint: data size mismatch for " + entry.name);
    size_t k = 0;
    for (Eigen::Index r = 0; r < entry.value->rows(); ++r)
      for (Eigen::Index c = 0; c < entry.value->cols(); ++c)
        (*entry.value)(r, c) = flat[k++];
  }
  return out;
}

}  // namespace negmix
