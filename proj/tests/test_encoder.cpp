#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "negmix/encoder.hpp"
#include "negmix/graph.hpp"
#include "negmix/io.hpp"
#include "negmix/rng.hpp"
#include "testutil.hpp"

using namespace negmix;
namespace fs = std::filesystem;

namespace {

Graph tiny_graph(std::uint64_t seed, int nodes = 6, int feats = 3) {
  Graph g;
  g.num_nodes = nodes;
  g.num_classes = 3;
  Pcg32 rng(seed);
  g.features = testutil::rand_mat(nodes, feats, rng, -1.0, 1.0);
  for (int i = 0; i + 1 < nodes; ++i) g.edges.emplace_back(i, i + 1);
  g.edges.emplace_back(0, nodes - 1);
  g.labels.resize((size_t)nodes);
  for (int i = 0; i < nodes; ++i) g.labels[(size_t)i] = i % 3;
  g.finalize();
  return g;
}

}  // namespace

TEST_CASE("encoder output widths follow layers x heads x embed_dim") {
  Graph g = tiny_graph(1);
  EncoderConfig cfg{2, 2, 4, 0.2};
  ModelParams p = ModelParams::init(cfg, g.num_features(), 4, true, 7);
  Tape t;
  ModelVars m = bind_model(t, p);
  auto enc = encode(t, AttentionIndex::build(g), t.constant(g.features), m, cfg);
  REQUIRE(enc.per_layer.size() == 2);
  REQUIRE(enc.per_layer[0].value().cols() == 8);
  REQUIRE(enc.per_layer[1].value().cols() == 8);
  REQUIRE(enc.concat.value().rows() == g.num_nodes);
  REQUIRE(enc.concat.value().cols() == 16);  // 2 * 2 * 4

  Var probs = classify(t, enc.concat, m);
  REQUIRE(probs.value().cols() == 4);
  for (int r = 0; r < g.num_nodes; ++r)
    REQUIRE(probs.value().row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("isolated node reduces to elu of its own projection") {
  Graph g;
  g.num_nodes = 3;
  g.num_classes = 2;
  Pcg32 rng(5);
  g.features = testutil::rand_mat(3, 4, rng, -1.0, 1.0);
  g.edges = {{0, 1}};  // node 2 isolated
  g.finalize();

  EncoderConfig cfg{2, 2, 3, 0.2};
  ModelParams p = ModelParams::init(cfg, 4, 3, true, 11);
  Tape t;
  ModelVars m = bind_model(t, p);
  auto enc = encode(t, AttentionIndex::build(g), t.constant(g.features), m, cfg);

  // Layer 1: attention over {self} collapses to the projection itself.
  Mat expect1(1, 6);
  for (int h = 0; h < 2; ++h)
    expect1.middleCols(3 * h, 3) = g.features.row(2) * p.W[0][(size_t)h];
  expect1 = expect1.unaryExpr([](double x) { return x > 0 ? x : std::expm1(x); });
  REQUIRE((enc.per_layer[0].value().row(2) - expect1.row(0)).cwiseAbs().maxCoeff()
          < 1e-12);

  // Layer 2 input is the activated layer-1 row; the last layer stays linear.
  Mat expect2(1, 6);
  for (int h = 0; h < 2; ++h)
    expect2.middleCols(3 * h, 3) = expect1 * p.W[1][(size_t)h];
  REQUIRE((enc.per_layer[1].value().row(2) - expect2.row(0)).cwiseAbs().maxCoeff()
          < 1e-12);
}

TEST_CASE("attention weights make each aggregation a convex combination") {
  // With identical features every projected neighbor is identical, so the
  // aggregated row must equal the shared projection no matter the weights.
  Graph g;
  g.num_nodes = 4;
  g.num_classes = 2;
  g.features = Mat::Ones(4, 3);
  g.edges = {{0, 1}, {0, 2}, {0, 3}, {1, 2}};
  g.finalize();
  EncoderConfig cfg{1, 1, 5, 0.2};
  ModelParams p = ModelParams::init(cfg, 3, 3, true, 3);
  Tape t;
  ModelVars m = bind_model(t, p);
  auto enc = encode(t, AttentionIndex::build(g), t.constant(g.features), m, cfg);
  Mat proj = g.features.row(0) * p.W[0][0];
  for (int i = 0; i < 4; ++i)
    REQUIRE((enc.per_layer[0].value().row(i) - proj.row(0)).cwiseAbs().maxCoeff()
            < 1e-12);
}

TEST_CASE("encoder is equivariant to node relabeling") {
  Graph g = tiny_graph(21, 7, 3);
  std::vector<int> perm{3, 0, 6, 1, 5, 2, 4};  // new id of old node i
  Graph h;
  h.num_nodes = 7;
  h.num_classes = g.num_classes;
  h.features = Mat(7, 3);
  for (int i = 0; i < 7; ++i)
    h.features.row(perm[(size_t)i]) = g.features.row(i);
  for (auto [a, b] : g.edges)
    h.edges.emplace_back(perm[(size_t)a], perm[(size_t)b]);
  h.finalize();

  EncoderConfig cfg{2, 2, 4, 0.2};
  ModelParams p = ModelParams::init(cfg, 3, 3, true, 9);
  Tape tg, th;
  auto eg = encode(tg, AttentionIndex::build(g), tg.constant(g.features),
                   bind_model(tg, p), cfg);
  auto eh = encode(th, AttentionIndex::build(h), th.constant(h.features),
                   bind_model(th, p), cfg);
  for (int i = 0; i < 7; ++i)
    REQUIRE((eg.concat.value().row(i) -
             eh.concat.value().row(perm[(size_t)i])).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("cross-entropy gradient on the full model passes finite differences") {
  Graph g = tiny_graph(31, 5, 3);
  EncoderConfig cfg{2, 2, 3, 0.2};
  AttentionIndex index = AttentionIndex::build(g);
  std::vector<int> train{0, 2, 4};

  for (int trial = 0; trial < 5; ++trial) {
    ModelParams p =
        ModelParams::init(cfg, 3, 4, true, 1000 + (std::uint64_t)trial);
    std::vector<Mat> inputs;
    for (const NamedParam& e : param_entries(p)) inputs.push_back(*e.value);
    testutil::FdSpec spec{
        inputs,
        [&](Tape& t, std::vector<Var>& vars) {
          ModelParams q = p;
          auto entries = param_entries(q);
          for (size_t k = 0; k < entries.size(); ++k)
            *entries[k].value = vars[k].value();
          ModelVars m;
          m.W.resize(2);
          m.attn_src.resize(2);
          m.attn_dst.resize(2);
          size_t k = 0;
          for (size_t l = 0; l < 2; ++l)
            for (size_t h = 0; h < 2; ++h) {
              m.W[l].push_back(vars[k++]);
              m.attn_src[l].push_back(vars[k++]);
              m.attn_dst[l].push_back(vars[k++]);
            }
          m.clf_W = vars[k++];
          m.clf_b = vars[k++];
          auto enc = encode(t, index, t.constant(g.features), m, cfg);
          return cross_entropy_loss(t, classify(t, enc.concat, m),
                                    g.labels, train);
        },
        1e-6,
        1e-5};
    testutil::fd_check(spec, "encoder_ce");
  }
}

TEST_CASE("cross-entropy matches a hand computation and validates input") {
  Tape t;
  Mat probs(3, 3);
  probs << 0.5, 0.25, 0.25,
           0.1, 0.8, 0.1,
           1.0 / 3, 1.0 / 3, 1.0 / 3;
  Var v = t.leaf(probs);
  std::vector<int> labels{0, 1, 2};
  std::vector<int> nodes{0, 1, 2};
  double expect = -(std::log(0.5) + std::log(0.8) + std::log(1.0 / 3)) / 3.0;
  REQUIRE(cross_entropy_loss(t, v, labels, nodes).value()(0, 0) ==
          doctest::Approx(expect).epsilon(1e-12));

  // Uniform probabilities over 3 classes cost exactly ln 3.
  Tape t2;
  Var u = t2.leaf(Mat::Constant(4, 3, 1.0 / 3));
  std::vector<int> lab{0, 1, 2, 1};
  std::vector<int> all{0, 1, 2, 3};
  REQUIRE(cross_entropy_loss(t2, u, lab, all).value()(0, 0) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));

  CHECK_THROWS_AS(cross_entropy_loss(t, v, labels, {}), Error);
  std::vector<int> bad{0, 1, 7};
  CHECK_THROWS_AS(cross_entropy_loss(t, v, bad, nodes), Error);
}

TEST_CASE("predict takes the argmax and breaks ties toward lower index") {
  Mat probs(3, 4);
  probs << 0.1, 0.6, 0.2, 0.1,
           0.25, 0.25, 0.25, 0.25,
           0.3, 0.1, 0.3, 0.3;
  auto pred = predict(probs);
  REQUIRE(pred == std::vector<int>{1, 0, 0});
}

TEST_CASE("model init is deterministic and seed-sensitive") {
  EncoderConfig cfg{2, 2, 4, 0.2};
  ModelParams a = ModelParams::init(cfg, 5, 3, true, 42);
  ModelParams b = ModelParams::init(cfg, 5, 3, true, 42);
  ModelParams c = ModelParams::init(cfg, 5, 3, true, 43);
  REQUIRE((a.clf_W - b.clf_W).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((a.W[0][0] - b.W[0][0]).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((a.clf_W - c.clf_W).cwiseAbs().maxCoeff() > 0.0);
  REQUIRE(a.clf_b.cwiseAbs().maxCoeff() == 0.0);

  auto entries = param_entries(a);
  REQUIRE(entries.size() == 2 * 2 * 3 + 2);
  Tape t;
  ModelVars m = bind_model(t, a);
  REQUIRE(m.ordered.size() == entries.size());
  for (size_t k = 0; k < entries.size(); ++k)
    REQUIRE((m.ordered[k].value() - *entries[k].value).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoints round-trip exactly and reject corruption") {
  EncoderConfig cfg{2, 2, 4, 0.2};
  ModelParams p = ModelParams::init(cfg, 5, 3, false, 42);
  fs::path path = fs::temp_directory_path() / "negmix_test_ckpt.json";
  nlohmann::json extra;
  extra["dataset"] = "unit";
  extra["seed"] = 42;
  save_checkpoint(path, p, extra);

  LoadedCheckpoint lc = load_checkpoint(path);
  REQUIRE(lc.params.enc.layers == 2);
  REQUIRE(lc.params.classifier_bias == false);
  REQUIRE(lc.meta["dataset"] == "unit");
  REQUIRE(lc.meta["seed"] == 42);
  auto ea = param_entries(p);
  auto eb = param_entries(lc.params);
  REQUIRE(ea.size() == eb.size());
  for (size_t k = 0; k < ea.size(); ++k)
    REQUIRE((*ea[k].value - *eb[k].value).cwiseAbs().maxCoeff() == 0.0);

  negmix::write_text_file_atomic(path, "{\"format\":\"bogus\"}");
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  fs::remove(path);
}
