#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>

#include "amq/errors.hpp"
#include "amq/imagegen.hpp"

namespace amq::imagegen {
namespace {

double oracle_badness(double speed, double temp) {
  const double u = std::log(speed / 50.0) / std::log(20.0);
  const double v = (temp - 185.0) / 75.0;
  return std::clamp(0.7 * u + 0.3 * (1.0 - v), 0.0, 1.0);
}

TEST(Badness, WorkedValues) {
  EXPECT_DOUBLE_EQ(badness({50, 260}), 0.0);
  EXPECT_NEAR(badness({1000, 200}), 0.94, 1e-12);
  EXPECT_NEAR(badness({100, 185}), 0.4619, 1e-4);
  EXPECT_NEAR(badness({100, 185}), 0.7 * std::log(2.0) / std::log(20.0) + 0.3, 1e-12);
}

TEST(Badness, MonotoneOverLattice) {
  for (int i = 0; i < 50; ++i) {
    const double s = 50.0 + 950.0 * i / 49.0;
    for (int j = 0; j < 50; ++j) {
      const double t = 185.0 + 75.0 * j / 49.0;
      const double b = badness({s, t});
      EXPECT_NEAR(b, oracle_badness(s, t), 1e-12);
      if (i > 0) EXPECT_GE(b, badness({50.0 + 950.0 * (i - 1) / 49.0, t}));
      if (j > 0) EXPECT_LE(b, badness({s, 185.0 + 75.0 * (j - 1) / 49.0}));
    }
  }
}

TEST(Badness, OutOfRangeStates) {
  EXPECT_THROW(badness({49.9, 200}), DomainError);
  EXPECT_THROW(badness({1000.1, 200}), DomainError);
  EXPECT_THROW(badness({100, 184}), DomainError);
  EXPECT_THROW(badness({100, 261}), DomainError);
  EXPECT_THROW(badness({std::nan(""), 200}), DomainError);
  EXPECT_THROW(true_grade({100, 300}), DomainError);
}

TEST(TrueGrade, WorkedValues) {
  EXPECT_EQ(true_grade({50, 260}), Grade::A);
  EXPECT_EQ(true_grade({400, 185}), Grade::Failure);
  EXPECT_EQ(true_grade({1000, 230}), Grade::E);
  EXPECT_EQ(true_grade({200, 185}), Grade::D);  // speed 200 is not above 200
}

TEST(TrueGrade, GridDistribution) {
  std::map<Grade, int> counts;
  std::vector<std::pair<double, double>> failures;
  for (double s : kGridSpeeds) {
    for (double t : kGridTemperatures) {
      const Grade g = true_grade({s, t});
      ++counts[g];
      if (g == Grade::Failure) failures.emplace_back(s, t);
    }
  }
  EXPECT_EQ(counts[Grade::A], 3);
  EXPECT_EQ(counts[Grade::B], 4);
  EXPECT_EQ(counts[Grade::C], 5);
  EXPECT_EQ(counts[Grade::D], 6);
  EXPECT_EQ(counts[Grade::E], 3);
  EXPECT_EQ(counts[Grade::Failure], 3);
  const std::vector<std::pair<double, double>> expected{{400, 185}, {800, 185}, {1000, 185}};
  EXPECT_EQ(failures, expected);
}

TEST(GradeTable, StandardMatchesTrueGrade) {
  const auto table = GradeTable::standard();
  EXPECT_EQ(table.to_string(), "BBAA/CCBA/DCCB/XDDC/XEDD/XEED");
  EXPECT_EQ(GradeTable::parse(table.to_string()).to_string(), table.to_string());
}

TEST(GradeTable, ParseErrors) {
  EXPECT_ANY_THROW(GradeTable::parse("BBAA/CCBA"));
  EXPECT_ANY_THROW(GradeTable::parse("BBAA/CCBA/DCCB/XDDC/XEDD/XEEZ"));
  EXPECT_ANY_THROW(GradeTable::parse("BBAAA/CCBA/DCCB/XDDC/XEDD/XEED"));
}

TEST(SetPointClasses, TwentyOneCellsInSpeedMajorOrder) {
  const auto cells = valid_cells();
  ASSERT_EQ(cells.size(), kSetPointClasses);
  EXPECT_EQ(cells.front(), (GridCell{0, 0}));
  EXPECT_EQ(cells.back(), (GridCell{5, 3}));
  const auto map = setpoint_to_grade_map();
  for (std::size_t k = 0; k < cells.size(); ++k) {
    EXPECT_EQ(setpoint_class_index(cells[k]), k);
    EXPECT_EQ(setpoint_class_cell(k), cells[k]);
    EXPECT_EQ(map[k], static_cast<std::size_t>(true_grade(cell_state(cells[k]))));
  }
  EXPECT_ANY_THROW(setpoint_class_index(GridCell{3, 0}));
}

TEST(DefectField, ExpectedCounts) {
  EXPECT_EQ(expected_void_count({50, 260}), 0);
  EXPECT_EQ(expected_void_count({1000, 200}), 12);
  EXPECT_EQ(expected_overfill_count({50, 260}), 6);
  EXPECT_EQ(expected_overfill_count({1000, 200}), 0);
  // 0.8 u + 0.4 (1 - v) at (200, 230): u = ln4/ln20, v = 0.6
  const double u = std::log(4.0) / std::log(20.0);
  EXPECT_EQ(expected_void_count({200, 230}), static_cast<int>(std::lround(12 * (0.8 * u + 0.4 * 0.4))));
  EXPECT_EQ(expected_overfill_count({200, 230}), static_cast<int>(std::lround(6 * 0.6 * (1 - u))));
}

TEST(DefectField, VoidExpectationMonotone) {
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t s = 1; s < 6; ++s) {
      EXPECT_GE(expected_void_count({kGridSpeeds[s], kGridTemperatures[t]}),
                expected_void_count({kGridSpeeds[s - 1], kGridTemperatures[t]}));
    }
  }
  for (std::size_t s = 0; s < 6; ++s) {
    for (std::size_t t = 1; t < 4; ++t) {
      EXPECT_LE(expected_void_count({kGridSpeeds[s], kGridTemperatures[t]}),
                expected_void_count({kGridSpeeds[s], kGridTemperatures[t - 1]}));
    }
  }
}

TEST(DefectField, DeterministicWithJitterFormula) {
  const auto a = defect_field({800, 230}, 99);
  EXPECT_EQ(a, defect_field({800, 230}, 99));
  EXPECT_NEAR(a.bead_jitter, 0.05 * (1 + 2 * oracle_badness(800, 230)), 1e-12);
  EXPECT_EQ(defect_field({50, 260}, 5).void_count, 0u);
}

TEST(DefectField, RealizedCountsCentreOnExpectation) {
  double voids = 0.0, over = 0.0;
  const int n = 4000;
  for (int seed = 0; seed < n; ++seed) {
    const auto f = defect_field({200, 230}, static_cast<std::uint64_t>(seed));
    voids += f.void_count;
    over += f.overfill_count;
  }
  EXPECT_NEAR(voids / n, expected_void_count({200, 230}), 0.2);
  EXPECT_NEAR(over / n, expected_overfill_count({200, 230}), 0.1);
}

double dark_fraction(const Image& img, double below) {
  std::size_t n = 0;
  for (double p : img.pixels()) n += p < below;
  return static_cast<double>(n) / static_cast<double>(img.size());
}

TEST(Render, DeterministicAndInRange) {
  const Image a = render_layer({400, 230}, 3, 17);
  EXPECT_EQ(a, render_layer({400, 230}, 3, 17));
  EXPECT_NE(a, render_layer({400, 230}, 4, 17));
  EXPECT_NE(a, render_layer({400, 230}, 3, 18));
  EXPECT_EQ(a.width(), 64u);
  EXPECT_EQ(a.height(), 64u);
  for (double p : a.pixels()) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Render, BestCellHasNoVoidPixelsWithoutNoise) {
  RenderOptions opt;
  opt.noise_sigma = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_EQ(dark_fraction(render_layer({50, 260}, static_cast<std::uint32_t>(seed), seed, opt), 0.08), 0.0);
  }
}

TEST(Render, WorstCellIsDarkerOnAverage) {
  RenderOptions opt;
  opt.noise_sigma = 0.0;
  double bad = 0.0, good = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    bad += dark_fraction(render_layer({1000, 200}, 0, seed, opt), 0.08);
    good += dark_fraction(render_layer({50, 260}, 0, seed, opt), 0.08);
  }
  EXPECT_GT(bad / 100, good / 100);
}

TEST(Render, RasterDirectionAlternates) {
  RenderOptions opt;
  opt.noise_sigma = 0.0;
  opt.defects = {0, 0};
  // Horizontal beads vary down a column and are near-constant along a row.
  auto row_vs_column = [](const Image& img) {
    double along_row = 0.0, along_col = 0.0;
    for (std::size_t y = 0; y < img.height(); ++y) {
      for (std::size_t x = 1; x < img.width(); ++x) along_row += std::abs(img.at(x, y) - img.at(x - 1, y));
    }
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (std::size_t y = 1; y < img.height(); ++y) along_col += std::abs(img.at(x, y) - img.at(x, y - 1));
    }
    return along_row / along_col;
  };
  EXPECT_LT(row_vs_column(render_layer({50, 260}, 0, 1, opt)), 0.5);
  EXPECT_GT(row_vs_column(render_layer({50, 260}, 1, 1, opt)), 2.0);
}

TEST(Render, LevelsFollowTheRecipe) {
  RenderOptions opt;
  opt.noise_sigma = 0.0;
  const Image img = render_layer({1000, 200}, 0, 3, opt);
  std::map<double, int> levels;
  for (double p : img.pixels()) ++levels[p];
  EXPECT_GT(levels[kBackgroundLevel], 0);
  EXPECT_GT(levels[kBeadLevel], 0);
  EXPECT_GT(levels[kVoidLevel], 0);
  EXPECT_EQ(levels.count(kOverfillLevel), 0u);
}

TEST(Render, RefusesFailureSetPoints) {
  EXPECT_THROW(render_layer({400, 185}, 0, 1), DomainError);
  EXPECT_THROW(render_layer({1000, 185}, 0, 1), DomainError);
}

TEST(Render, LargeImagePath) {
  RenderOptions opt;
  opt.width = 600;
  opt.height = 600;
  const Image img = render_layer({800, 230}, 2, 5, opt);
  EXPECT_EQ(img.width(), 600u);
  EXPECT_EQ(img.height(), 600u);
  for (double p : img.pixels()) ASSERT_TRUE(p >= 0.0 && p <= 1.0);
  RenderOptions quiet = opt;
  quiet.noise_sigma = 0.0;
  EXPECT_GT(dark_fraction(render_layer({1000, 200}, 0, 5, quiet), 0.08), 0.0);
}

// Mean L1 distance between normalized 32-bin intensity histograms of two
// image populations, averaged over paired samples.
double histogram_distance(const ProcessState& a, const ProcessState& b, std::uint64_t seed_a,
                          std::uint64_t seed_b) {
  auto hist = [](const Image& img) {
    std::array<double, 32> h{};
    for (double p : img.pixels()) h[std::min<std::size_t>(31, static_cast<std::size_t>(p * 32))] += 1.0;
    for (auto& v : h) v /= static_cast<double>(img.size());
    return h;
  };
  double total = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto ha = hist(render_layer(a, static_cast<std::uint32_t>(i), seed_a + i));
    const auto hb = hist(render_layer(b, static_cast<std::uint32_t>(i), seed_b + i));
    for (std::size_t k = 0; k < 32; ++k) total += std::abs(ha[k] - hb[k]);
  }
  return total / 100.0;
}

TEST(Render, GradesAreSeparable) {
  const ProcessState a{50, 260}, e{1000, 200};
  const double a_vs_e = histogram_distance(a, e, 1000, 5000);
  const double a_vs_a = histogram_distance(a, a, 1000, 9000);
  EXPECT_GT(a_vs_e, a_vs_a);
}

}  // namespace
}  // namespace amq::imagegen
