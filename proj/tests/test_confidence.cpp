#include <random>

#include <gtest/gtest.h>

#include <mvlayout/confidence.hpp>

using namespace mvl;

namespace {

std::uint8_t label(SemanticLabel l) { return static_cast<std::uint8_t>(l); }

}  // namespace

TEST(SemanticTableTest, DefaultKeepsStructureAndDropsClutter) {
  SemanticMap sem(4, 1);
  sem[0] = label(SemanticLabel::floor);
  sem[1] = label(SemanticLabel::wall);
  sem[2] = label(SemanticLabel::ceiling);
  sem[3] = label(SemanticLabel::clutter);
  const auto c = semantic_confidence(sem, SemanticTable::layout_default());
  EXPECT_EQ(c.values[0], 1.0);
  EXPECT_EQ(c.values[1], 1.0);
  EXPECT_EQ(c.values[2], 1.0);
  EXPECT_EQ(c.values[3], 0.0);
  EXPECT_EQ(c.unknown_labels, 0);
}

TEST(SemanticTableTest, UnknownLabelsMapToZeroAndAreCounted) {
  SemanticMap sem(3, 2, label(SemanticLabel::wall));
  sem(0, 0) = 9;
  sem(2, 1) = label(SemanticLabel::unknown);
  const auto c = semantic_confidence(sem, SemanticTable::layout_default());
  EXPECT_EQ(c.unknown_labels, 2);
  EXPECT_EQ(c.values(0, 0), 0.0);
  EXPECT_EQ(c.values(2, 1), 0.0);
  EXPECT_EQ(c.values(1, 0), 1.0);
}

TEST(SemanticTableTest, ParsesNamesAndRawLabels) {
  const auto t = nlohmann::json::parse(R"({"wall": 0.8, "clutter": 0.1, "7": 0.5})").get<SemanticTable>();
  EXPECT_EQ(t.confidence.at(label(SemanticLabel::wall)), 0.8);
  EXPECT_EQ(t.confidence.at(label(SemanticLabel::clutter)), 0.1);
  EXPECT_EQ(t.confidence.at(7), 0.5);
  EXPECT_FALSE(t.confidence.contains(label(SemanticLabel::floor)));
  const nlohmann::json back = t;
  EXPECT_EQ(back.get<SemanticTable>().confidence, t.confidence);
}

TEST(SemanticTableTest, RejectsBadEntries) {
  EXPECT_THROW(nlohmann::json::parse(R"({"sofa": 1.0})").get<SemanticTable>(), DomainError);
  EXPECT_THROW(nlohmann::json::parse(R"({"wall": 1.5})").get<SemanticTable>(), DomainError);
  EXPECT_THROW(nlohmann::json::parse(R"({"floor": -0.1})").get<SemanticTable>(), DomainError);
  EXPECT_THROW(nlohmann::json::parse(R"({"300": 0.5})").get<SemanticTable>(), DomainError);
}

TEST(Combine, IsThePixelwiseProduct) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Raster<double> s(8, 4), a(8, 4);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = u(rng), a[i] = u(rng);
  const auto c = combine(s, a);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(c.combined[i], s[i] * a[i]);
    EXPECT_GE(c.combined[i], 0.0);
    EXPECT_LE(c.combined[i], 1.0);
  }
  EXPECT_EQ(c.semantic[3], s[3]);
  EXPECT_EQ(c.attention[5], a[5]);
}

TEST(Combine, RejectsOutOfRangeAndMismatchedInputs) {
  Raster<double> ok(4, 2, 0.5), big(4, 2, 0.5), small(2, 1, 0.5);
  big[1] = 1.2;
  EXPECT_THROW(combine(ok, small), DomainError);
  EXPECT_THROW(combine(big, ok), DomainError);
  EXPECT_THROW(combine(ok, big), DomainError);
}

TEST(Combine, OnesIsNeutral) {
  const auto c = ConfidenceMap::ones(6, 3);
  for (std::size_t i = 0; i < c.combined.size(); ++i) EXPECT_EQ(c.combined[i], 1.0);
}

TEST(Attention, GrayLevelsScaleToUnitRange) {
  Raster<std::uint8_t> g(3, 1);
  g[0] = 0, g[1] = 51, g[2] = 255;
  const auto a = attention_from_gray(g);
  EXPECT_EQ(a[0], 0.0);
  EXPECT_DOUBLE_EQ(a[1], 0.2);
  EXPECT_EQ(a[2], 1.0);
}
