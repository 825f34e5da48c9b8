#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "negmix/mixup.hpp"
#include "testutil.hpp"

using namespace negmix;

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::ArrayXd e = (z.array() - z.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

struct Fixture {
  Mat emb, clf_w, clf_b;
  std::vector<MixupPair> pairs;
  int classes_out = 4;  // 3 known + unknown

  explicit Fixture(std::uint64_t seed) {
    Pcg32 rng(seed);
    emb = testutil::rand_mat(6, 4, rng);
    clf_w = testutil::rand_mat(4, 4, rng);
    clf_b = testutil::rand_mat(1, 4, rng, -0.5, 0.5);
    pairs = {{4, 0, 0.7, 3, 1}, {5, 1, 0.3, 3, 2}, {4, 2, 0.55, 3, 0}};
  }

  Eigen::VectorXd mixed_probs(const MixupPair& p, bool negative) const {
    Eigen::VectorXd cand = p.lambda * emb.row(p.candidate).transpose();
    Eigen::VectorXd part = (1 - p.lambda) * emb.row(p.partner).transpose();
    Eigen::VectorXd h = negative ? (cand - part).eval() : (cand + part).eval();
    Eigen::VectorXd logits = clf_w.transpose() * h + clf_b.transpose();
    return softmax(logits);
  }
};

ModelVars clf_only(Tape& t, const Fixture& f) {
  ModelVars m;
  m.clf_W = t.leaf(f.clf_w);
  m.clf_b = t.leaf(f.clf_b);
  return m;
}

}  // namespace

TEST_CASE("positive mixup loss matches the soft-label cross entropy oracle") {
  Fixture f(11);
  Tape t;
  ModelVars m = clf_only(t, f);
  auto loss = positive_mixup_loss(t, t.leaf(f.emb), m, f.pairs, f.classes_out);
  REQUIRE(loss.has_value());

  double expect = 0.0;
  for (const MixupPair& p : f.pairs) {
    Eigen::VectorXd probs = f.mixed_probs(p, false);
    expect -= p.lambda * std::log(probs(p.candidate_label)) +
              (1 - p.lambda) * std::log(probs(p.partner_label));
  }
  expect /= static_cast<double>(f.pairs.size());
  REQUIRE(loss->value()(0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("negative mixup losses match their oracles") {
  Fixture f(13);
  Tape t;
  ModelVars m = clf_only(t, f);
  auto losses = negative_mixup_loss(t, t.leaf(f.emb), m, f.pairs, f.classes_out);
  REQUIRE(losses.positive.has_value());
  REQUIRE(losses.negative.has_value());

  double pos = 0.0, neg = 0.0;
  for (const MixupPair& p : f.pairs) {
    Eigen::VectorXd probs = f.mixed_probs(p, true);
    pos -= p.lambda * std::log(probs(f.classes_out - 1));
    neg -= (1 - p.lambda) * std::log(1.0 - probs(p.partner_label));
  }
  pos /= static_cast<double>(f.pairs.size());
  neg /= static_cast<double>(f.pairs.size());
  REQUIRE(losses.positive->value()(0, 0) == doctest::Approx(pos).epsilon(1e-12));
  REQUIRE(losses.negative->value()(0, 0) == doctest::Approx(neg).epsilon(1e-12));
}

TEST_CASE("mixup losses differentiate through embeddings and classifier") {
  for (int trial = 0; trial < 5; ++trial) {
    Fixture f(100 + (std::uint64_t)trial);
    auto build_vars = [&](std::vector<Var>& v) {
      ModelVars m;
      m.clf_W = v[1];
      m.clf_b = v[2];
      return m;
    };
    testutil::FdSpec pos{{f.emb, f.clf_w, f.clf_b},
                         [&](Tape& t, std::vector<Var>& v) {
                           ModelVars m = build_vars(v);
                           return *positive_mixup_loss(t, v[0], m, f.pairs,
                                                       f.classes_out);
                         },
                         1e-6};
    testutil::fd_check(pos, "positive_mixup");

    testutil::FdSpec negp{{f.emb, f.clf_w, f.clf_b},
                          [&](Tape& t, std::vector<Var>& v) {
                            ModelVars m = build_vars(v);
                            return *negative_mixup_loss(t, v[0], m, f.pairs,
                                                        f.classes_out).positive;
                          },
                          1e-6};
    testutil::fd_check(negp, "negative_mixup_positive_part");

    testutil::FdSpec negn{{f.emb, f.clf_w, f.clf_b},
                          [&](Tape& t, std::vector<Var>& v) {
                            ModelVars m = build_vars(v);
                            return *negative_mixup_loss(t, v[0], m, f.pairs,
                                                        f.classes_out).negative;
                          },
                          1e-6};
    testutil::fd_check(negn, "negative_mixup_negative_part");
  }
}

TEST_CASE("lambda = 1 silences the partner completely") {
  Fixture f(21);
  f.pairs = {{4, 0, 1.0, 3, 1}};
  Tape t;
  ModelVars m = clf_only(t, f);
  Var emb = t.leaf(f.emb);
  auto losses = negative_mixup_loss(t, emb, m, f.pairs, f.classes_out);
  REQUIRE(losses.negative->value()(0, 0) == 0.0);  // weight (1-lambda) = 0
  t.backward(*losses.positive);
  // The partner's embedding row gets no gradient: the blend multiplies it by
  // exactly zero.
  REQUIRE(emb.grad().row(0).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(emb.grad().row(4).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("positive mixup with identical labels reduces to plain CE") {
  Fixture f(31);
  f.pairs = {{4, 0, 0.6, 2, 2}};
  Tape t;
  ModelVars m = clf_only(t, f);
  auto loss = positive_mixup_loss(t, t.leaf(f.emb), m, f.pairs, f.classes_out);
  Eigen::VectorXd probs = f.mixed_probs(f.pairs[0], false);
  REQUIRE(loss->value()(0, 0) ==
          doctest::Approx(-std::log(probs(2))).epsilon(1e-12));
}

TEST_CASE("empty pair lists skip the losses") {
  Fixture f(41);
  Tape t;
  ModelVars m = clf_only(t, f);
  REQUIRE_FALSE(positive_mixup_loss(t, t.leaf(f.emb), m, {}, 4).has_value());
  auto losses = negative_mixup_loss(t, t.leaf(f.emb), m, {}, 4);
  REQUIRE_FALSE(losses.positive.has_value());
  REQUIRE_FALSE(losses.negative.has_value());
}

TEST_CASE("mixup pair validation rejects bad labels and indices") {
  Fixture f(51);
  Tape t;
  ModelVars m = clf_only(t, f);
  Var emb = t.leaf(f.emb);
  std::vector<MixupPair> bad_label = {{4, 0, 0.5, 9, 1}};
  CHECK_THROWS_AS(positive_mixup_loss(t, emb, m, bad_label, 4), Error);
  std::vector<MixupPair> unknown_partner = {{4, 0, 0.5, 3, 3}};
  // Partner label must be a known class for the negative loss.
  CHECK_THROWS_AS(negative_mixup_loss(t, emb, m, unknown_partner, 4), Error);
  std::vector<MixupPair> bad_node = {{9, 0, 0.5, 3, 1}};
  CHECK_THROWS_AS(positive_mixup_loss(t, emb, m, bad_node, 4), Error);
  std::vector<MixupPair> bad_lambda = {{4, 0, 1.5, 3, 1}};
  CHECK_THROWS_AS(positive_mixup_loss(t, emb, m, bad_lambda, 4), Error);
}

TEST_CASE("draw_mixup_pairs is deterministic and well-formed") {
  std::vector<int> candidates{5, 6, 7, 8};
  std::vector<int> cand_labels{3, 3, 3, 3};
  std::vector<int> labeled{0, 1, 2};
  std::vector<int> full_labels{0, 1, 2, 0, 1, 3, 3, 3, 3};

  Pcg32 a(77), b(77);
  auto pa = draw_mixup_pairs(candidates, cand_labels, labeled, full_labels, 1.0, a);
  auto pb = draw_mixup_pairs(candidates, cand_labels, labeled, full_labels, 1.0, b);
  REQUIRE(pa.size() == 4);
  for (size_t k = 0; k < pa.size(); ++k) {
    REQUIRE(pa[k].candidate == candidates[k]);
    REQUIRE(pa[k].candidate_label == 3);
    REQUIRE(pa[k].lambda >= 0.0);
    REQUIRE(pa[k].lambda <= 1.0);
    bool in_pool = pa[k].partner == 0 || pa[k].partner == 1 || pa[k].partner == 2;
    REQUIRE(in_pool);
    REQUIRE(pa[k].partner_label == full_labels[(size_t)pa[k].partner]);
    REQUIRE(pa[k].partner == pb[k].partner);
    REQUIRE(pa[k].lambda == pb[k].lambda);
  }

  Pcg32 c(78);
  CHECK_THROWS_AS(draw_mixup_pairs(candidates, cand_labels, {}, full_labels, 1.0, c),
                  Error);
  CHECK_THROWS_AS(
      draw_mixup_pairs(candidates, {3, 3}, labeled, full_labels, 1.0, c), Error);
}
