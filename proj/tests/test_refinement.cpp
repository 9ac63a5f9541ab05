#include "scm/error.hpp"
#include "scm/heads.hpp"
#include "scm/refinement.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace scm;
using namespace scm::testing;

namespace {

void expect_distribution(const std::vector<double> &v) {
  double sum = 0;
  for (double x : v) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
    sum += x;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

void expect_values(const std::vector<double> &got, const std::vector<double> &want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    EXPECT_NEAR(got[i], want[i], 1e-15) << "entry " << i;
}

} // namespace

TEST(RefineAnchor, FiveWayAtPointFour) {
  expect_values(refine_anchor_label(5, 0.4), {0.6, 0.1, 0.1, 0.1, 0.1});
}

TEST(RefineAnchor, ZeroEpsilonIsOneHot) {
  EXPECT_EQ(refine_anchor_label(4, 0.0), (std::vector<double>{1, 0, 0, 0}));
}

TEST(RefineAnchor, SingletonIsHardLabel) {
  EXPECT_EQ(refine_anchor_label(1, 0.5), (std::vector<double>{1}));
}

TEST(RefineMember, FiveWayAtPointFour) {
  expect_values(refine_member_label(2, 0, 5, 0.4), {0.4, 0, 0.6, 0, 0});
}

TEST(RefineMember, ZeroEpsilonIsOneHotAtMember) {
  EXPECT_EQ(refine_member_label(3, 0, 4, 0.0), (std::vector<double>{0, 0, 0, 1}));
}

TEST(RefineMember, RejectsAnchorPositionAndOutOfRange) {
  EXPECT_THROW(refine_member_label(1, 1, 3, 0.2), ContractError);
  EXPECT_THROW(refine_member_label(3, 0, 3, 0.2), ContractError);
}

TEST(RefineMember, RandomDrawsSumToOne) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> eps(0.0, 0.999);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng() % 20;
    const std::size_t d = rng() % n;
    std::size_t z = rng() % n;
    if (z == d)
      z = (z + 1) % n;
    const double e = eps(rng);
    const auto v = refine_member_label(z, d, n, e);
    expect_distribution(v);
    EXPECT_DOUBLE_EQ(v[z], 1 - e);
    EXPECT_DOUBLE_EQ(v[d], e);
    expect_distribution(refine_anchor_label(n, e));
  }
}

TEST(Refine, AnchorAndMemberRulesCoincideForPairs) {
  for (double e : {0.0, 0.1, 0.5, 0.9}) {
    const auto a = refine_anchor_label(2, e);
    const auto m = refine_member_label(0, 1, 2, e);
    EXPECT_EQ(a, m);
  }
}

TEST(RefinedTarget, DispatchesOnPosition) {
  EXPECT_EQ(refined_target(0, 4, 0.3), refine_anchor_label(4, 0.3));
  EXPECT_EQ(refined_target(2, 4, 0.3), refine_member_label(2, 0, 4, 0.3));
}

TEST(RefinementConfig, EpsilonRange) {
  EXPECT_NO_THROW(RefinementConfig{0.0}.validate());
  EXPECT_NO_THROW(RefinementConfig{0.99}.validate());
  EXPECT_THROW(RefinementConfig{1.0}.validate(), ConfigError);
  EXPECT_THROW(RefinementConfig{-0.1}.validate(), ConfigError);
}

TEST(RefinedCe, MemberLabelAgainstUniformIsLogFive) {
  const std::vector<double> p(5, 0.2);
  EXPECT_NEAR(refined_ce_loss(p, refine_member_label(2, 0, 5, 0.4)), std::log(5.0), 1e-14);
}

TEST(RefinedCe, ZeroEpsilonEqualsHardCe) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto p = random_distribution(6, rng);
    const std::size_t z = 1 + rng() % 5;
    std::vector<double> hard(6, 0.0);
    hard[z] = 1.0;
    EXPECT_EQ(refined_ce_loss(p, refined_target(z, 6, 0.0)), ce_loss(p, hard));
    hard.assign(6, 0.0);
    hard[0] = 1.0;
    EXPECT_EQ(refined_ce_loss(p, refined_target(0, 6, 0.0)), ce_loss(p, hard));
  }
}

TEST(RefinedCe, MinimizedAtItsOwnTarget) {
  const auto t = refine_anchor_label(4, 0.5);
  const double at_target = refined_ce_loss(t, t);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i)
    EXPECT_GE(refined_ce_loss(random_distribution(4, rng), t), at_target);
}

TEST(RefinedCe, ShapeMismatchThrows) {
  const std::vector<double> p{0.5, 0.5};
  EXPECT_THROW(refined_ce_loss(p, refine_anchor_label(3, 0.2)), ShapeError);
}

TEST(RefinedCe, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> eps(0.0, 0.9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 6, d = 1 + trial % 5;
    auto h = random_head(n, d, rng);
    const auto x = random_vector(d, rng);
    const auto target = refined_target(rng() % n, n, eps(rng));
    const auto fd = central_difference(
        [&] { return refined_ce_loss(softmax(forward(h, x)), target); }, parameters(h));
    EXPECT_LT(relative_error(flatten(grad_softmax_ce(h, x, target)), fd), 1e-5);
  }
}
