#include <gtest/gtest.h>

#include <random>
#include <set>

#include "scmm/error.hpp"
#include "scmm/eval.hpp"

namespace scmm {
namespace {

const LabelSet kPerLoc({"PER", "LOC"});
constexpr LabelId O = 0, BP = 1, IP = 2, BL = 3, IL = 4;

TEST(Decode, Examples) {
  EXPECT_EQ(decode_entities({BP, IP, O}, kPerLoc), (std::vector<EntitySpan>{{0, 2, 0}}));
  EXPECT_EQ(decode_entities({O, IP}, kPerLoc), (std::vector<EntitySpan>{{1, 2, 0}}));
  EXPECT_EQ(decode_entities({BP, BP}, kPerLoc), (std::vector<EntitySpan>{{0, 1, 0}, {1, 2, 0}}));
  EXPECT_EQ(decode_entities({BP, IL, IL}, kPerLoc), (std::vector<EntitySpan>{{0, 1, 0}, {1, 3, 1}}));
  EXPECT_TRUE(decode_entities({O, O}, kPerLoc).empty());
}

TEST(Decode, EncodeRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> coin(0, 3);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<EntitySpan> spans;
    int t = 0;
    const int T = 1 + rep % 12;
    while (t < T) {
      if (coin(rng) == 0) {
        const int len = 1 + coin(rng) % 3;
        const int end = std::min(T, t + len);
        spans.push_back({t, end, coin(rng) % 2});
        t = end;
      } else {
        ++t;
      }
    }
    auto seq = encode_entities(spans, T, kPerLoc);
    EXPECT_EQ(decode_entities(seq, kPerLoc), spans);
  }
}

TEST(Prf, Perfect) {
  std::vector<std::vector<LabelId>> gold{{BP, IP, O, BL}, {O, BL, IL}};
  auto r = entity_prf(gold, gold, kPerLoc);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_EQ(r.per_entity.at("LOC").gold, 2);
}

TEST(Prf, BoundaryMismatchScoresZero) {
  auto r = entity_prf({{BP, IP, O}}, {{BP, O, O}}, kPerLoc);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.f1, 0.0);
}

TEST(Prf, HalfRecall) {
  auto r = entity_prf({{BP, O, BL}}, {{BP, O, O}}, kPerLoc);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.f1, 2.0 / 3.0);
}

TEST(Prf, NothingPredictedOrGold) {
  auto r = entity_prf({{O, O}}, {{O, O}}, kPerLoc);
  EXPECT_EQ(r.f1, 0.0);
  auto m = metrics_from_counts(0, 0, 3);
  EXPECT_EQ(m.precision, 0.0);
}

TEST(Prf, LengthMismatch) {
  EXPECT_THROW(entity_prf({{O, O}}, {{O}}, kPerLoc), Error);
  EXPECT_THROW(entity_prf({{O}}, {{O}, {O}}, kPerLoc), Error);
}

TEST(Prf, F1BetweenZeroAndMaxOfPrecisionRecall) {
  for (long tp = 0; tp <= 10; ++tp) {
    for (long pred = tp; pred <= 12; ++pred) {
      for (long gold = tp; gold <= 12; ++gold) {
        auto m = metrics_from_counts(tp, pred, gold);
        EXPECT_GE(m.f1, 0.0);
        EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-15);
        if (m.precision == m.recall) EXPECT_NEAR(m.f1, m.precision, 1e-15);
      }
    }
  }
}

TEST(MajorityVote, Plurality) {
  std::mt19937_64 rng(2);
  WeakAnnotationMatrix w{{"a", "b", "c"}, {{BP}, {BP}, {BL}}};
  EXPECT_EQ(majority_vote(w, 5, rng), std::vector<LabelId>{BP});
}

TEST(MajorityVote, AllAbstainIsOutside) {
  std::mt19937_64 rng(3);
  WeakAnnotationMatrix w{{"a", "b"}, {{O, O}, {O, O}}};
  EXPECT_EQ(majority_vote(w, 5, rng), (std::vector<LabelId>{O, O}));
}

TEST(MajorityVote, OutsideVotesIgnoredByDefault) {
  std::mt19937_64 rng(4);
  WeakAnnotationMatrix w{{"a", "b", "c"}, {{O}, {O}, {BL}}};
  EXPECT_EQ(majority_vote(w, 5, rng), std::vector<LabelId>{BL});
  VoteOptions opt;
  opt.count_outside = true;
  EXPECT_EQ(majority_vote(w, 5, rng, opt), std::vector<LabelId>{O});
}

TEST(MajorityVote, TieIsSeededMember) {
  WeakAnnotationMatrix w{{"a", "b"}, std::vector<std::vector<LabelId>>{std::vector<LabelId>(50, BP), std::vector<LabelId>(50, BL)}};
  std::mt19937_64 r1(5), r2(5);
  auto a = majority_vote(w, 5, r1);
  auto b = majority_vote(w, 5, r2);
  EXPECT_EQ(a, b);
  std::set<LabelId> seen(a.begin(), a.end());
  EXPECT_EQ(seen, (std::set<LabelId>{BP, BL}));
}

TEST(MajorityVote, SingleLfIsIdentity) {
  std::mt19937_64 rng(6);
  WeakAnnotationMatrix w{{"a"}, {{O, BP, IP, O, BL, IL, IL}}};
  EXPECT_EQ(majority_vote(w, 5, rng), w.obs[0]);
}

TEST(MajorityVote, ActiveLfsLimit) {
  std::mt19937_64 rng(7);
  WeakAnnotationMatrix w{{"a", "b", "c"}, {{BP}, {BL}, {BL}}};
  VoteOptions opt;
  opt.active_lfs = 1;
  EXPECT_EQ(majority_vote(w, 5, rng, opt), std::vector<LabelId>{BP});
}

TEST(Pearson, Examples) {
  std::vector<double> a{1.0, 2.5, 3.0, -1.0};
  std::vector<double> neg;
  for (double x : a) neg.push_back(-x);
  EXPECT_NEAR(pearson(a, a), 1.0, 1e-12);
  EXPECT_NEAR(pearson(a, neg), -1.0, 1e-12);
  std::vector<double> c(4, 2.0);
  try {
    pearson(a, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
  std::vector<double> one{1.0};
  EXPECT_THROW(pearson(one, one), Error);
}

TEST(Pearson, HandValue) {
  // x = (1,2,3), y = (1,3,2): cov = 0.5, var = 1 each.
  std::vector<double> x{1, 2, 3}, y{1, 3, 2};
  EXPECT_NEAR(pearson(x, y), 0.5, 1e-12);
}

}  // namespace
}  // namespace scmm
