#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "negmix/graph.hpp"
#include "negmix/tape.hpp"

namespace negmix {

struct EncoderConfig {
  int layers = 2;
  int heads = 2;
  int embed_dim = 16;       // per-head output width F'
  double attn_slope = 0.2;  // leaky-relu slope inside attention
};

// Full model: graph-attention encoder plus linear (C+1)-way classifier over
// the concatenation of every layer's embedding.
struct ModelParams {
  EncoderConfig enc;
  int in_features = 0;
  int classes_out = 0;  // C+1
  bool classifier_bias = true;
  std::vector<std::vector<Mat>> W;         // [layer][head]: in_dim x embed_dim
  std::vector<std::vector<Mat>> attn_src;  // [layer][head]: embed_dim x 1
  std::vector<std::vector<Mat>> attn_dst;  // [layer][head]: embed_dim x 1
  Mat clf_W;  // final_width x classes_out
  Mat clf_b;  // 1 x classes_out (zero-initialized; absent from use when bias off)

  int layer_in_dim(int layer) const {
    return layer == 0 ? in_features : enc.heads * enc.embed_dim;
  }
  int final_width() const { return enc.layers * enc.heads * enc.embed_dim; }

  // Glorot-uniform init; draws happen in param_entries order from the
  // "init" sub-stream of `seed`.
  static ModelParams init(const EncoderConfig& cfg, int in_features,
                          int classes_out, bool classifier_bias,
                          std::uint64_t seed);
};

struct NamedParam {
  std::string name;
  Mat* value;
};

// Deterministic enumeration (layer-major, then head; classifier last). The
// optimizer, checkpoint format, and tape binding all share this order.
std::vector<NamedParam> param_entries(ModelParams& p);

// Flattened (node i, neighbor j) pairs with j over N_i plus i itself; src is
// sorted and contiguous so it doubles as the softmax segment id.
struct AttentionIndex {
  std::vector<int> src, dst;
  int num_nodes = 0;
  static AttentionIndex build(const Graph& g);
};

struct ModelVars {
  std::vector<std::vector<Var>> W, attn_src, attn_dst;
  Var clf_W, clf_b;
  std::vector<Var> ordered;  // aligned with param_entries
};

ModelVars bind_model(Tape& t, const ModelParams& p);

struct EncodeResult {
  std::vector<Var> per_layer;  // each N x (heads*embed_dim)
  Var concat;                  // N x final_width
};

// Per layer: one attention head computes h_i = sum_j alpha_ij (W x_j) with
// alpha = segment-softmax(leaky_relu(a_src.Wx_i + a_dst.Wx_j)) over j in
// N_i u {i}; heads concatenate. Hidden layers pass through ELU (that
// activated value is both the next layer's input and the layer's embedding);
// the last layer's embedding stays linear.
EncodeResult encode(Tape& t, const AttentionIndex& index, Var features,
                    const ModelVars& m, const EncoderConfig& cfg);

Var classify_logits(Tape& t, Var embeddings, const ModelVars& m);
Var classify(Tape& t, Var embeddings, const ModelVars& m);  // row softmax

// Argmax per row; ties resolve to the lowest class index.
std::vector<int> predict(const Mat& probs);

// Mean negative log-probability of the true class over `nodes`.
Var cross_entropy_loss(Tape& t, Var probs, const std::vector<int>& labels,
                       const std::vector<int>& nodes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& p,
                     const nlohmann::json& extra_meta);

struct LoadedCheckpoint {
  ModelParams params;
  nlohmann::json meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace negmix
