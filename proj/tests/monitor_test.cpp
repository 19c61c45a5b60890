#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "amq/checkpoint.hpp"
#include "amq/dataset.hpp"
#include "amq/errors.hpp"
#include "amq/monitor.hpp"
#include "test_support.hpp"

namespace amq::monitor {
namespace {

using imagegen::badness;
using imagegen::GridCell;
using testing::TempDir;

nn::ModelConfig frame_model() { return testing::tiny_config(5, 2, true); }

nn::Parameters frame_params(std::uint64_t seed = 3) { return testing::random_params(frame_model(), seed, 1.0); }

Image random_frame(std::uint64_t seed, std::size_t w = 8, std::size_t h = 8) {
  Image img(w, h);
  Rng rng(seed);
  for (auto& p : img.pixels()) p = rng.uniform();
  return img;
}

GradeDistribution one_hot(Grade g) {
  GradeDistribution d{};
  d[static_cast<std::size_t>(g)] = 1.0;
  return d;
}

MonitorConfig window_of(std::size_t w, std::size_t k = 5) {
  MonitorConfig c;
  c.window_size = w;
  c.stop_after = k;
  return c;
}

GradeDistribution frame_distribution(const Image& img) {
  const auto p = nn::predict(frame_model(), frame_params(), imagegen::image_to_tensor(normalize_intensity(img)));
  GradeDistribution d{};
  std::copy(p.data().begin(), p.data().end(), d.begin());
  return d;
}

TEST(Session, WindowOfOneSignalsEveryFrameWithRawDistribution) {
  MonitorSession s(window_of(1), frame_model(), frame_params());
  for (std::uint64_t i = 0; i < 5; ++i) {
    const Image img = random_frame(i);
    const auto sig = s.push_frame(img);
    ASSERT_TRUE(sig.has_value());
    EXPECT_EQ(sig->frame_index, i);
    const auto raw = frame_distribution(img);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(sig->distribution[k], raw[k], 1e-12);
    double sum = 0.0;
    for (double v : sig->distribution) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6);
    EXPECT_EQ(sig->confidence, *std::max_element(raw.begin(), raw.end()));
  }
}

TEST(Session, NoSignalBeforeWindowFills) {
  MonitorSession s(window_of(4), frame_model(), frame_params());
  for (std::uint64_t i = 0; i < 3; ++i) EXPECT_FALSE(s.push_frame(random_frame(i)).has_value());
  EXPECT_TRUE(s.push_frame(random_frame(3)).has_value());
  EXPECT_EQ(s.frames_seen(), 4u);
}

TEST(Session, ConstantFrameMeanEqualsSingleFrame) {
  MonitorSession s(window_of(7), frame_model(), frame_params());
  const Image img = random_frame(42);
  const auto raw = frame_distribution(img);
  std::optional<QualitySignal> sig;
  for (int i = 0; i < 7; ++i) sig = s.push_frame(img);
  ASSERT_TRUE(sig.has_value());
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(sig->distribution[k], raw[k], 1e-9);
}

TEST(Session, WindowMeanOfLastFrames) {
  MonitorSession s(window_of(3), frame_model(), frame_params());
  std::vector<GradeDistribution> frames;
  Rng rng(5);
  for (int i = 0; i < 12; ++i) {
    GradeDistribution d{};
    double sum = 0.0;
    for (auto& v : d) sum += v = rng.uniform();
    for (auto& v : d) v /= sum;
    frames.push_back(d);
    const auto sig = s.push_distribution(d);
    if (i < 2) continue;
    ASSERT_TRUE(sig.has_value());
    for (std::size_t k = 0; k < 5; ++k) {
      const double mean = (frames[i][k] + frames[i - 1][k] + frames[i - 2][k]) / 3.0;
      EXPECT_NEAR(sig->distribution[k], mean, 1e-9);
    }
  }
}

TEST(Session, RejectsWrongFrameSize) {
  MonitorSession s(window_of(1), frame_model(), frame_params());
  EXPECT_THROW(s.push_frame(random_frame(1, 9, 8)), DomainError);
  EXPECT_EQ(s.frames_seen(), 0u);
}

TEST(Session, LatchNeverReleasesUntilReset) {
  MonitorSession s(window_of(1, 3), frame_model(), frame_params());
  Rng rng(9);
  bool was_no_go = false;
  for (int i = 0; i < 300; ++i) {
    const auto g = static_cast<Grade>(rng.uniform() < 0.5 ? 4 : rng.below(5));
    const auto sig = s.push_distribution(one_hot(g));
    ASSERT_TRUE(sig.has_value());
    EXPECT_EQ(sig->decision, s.decision());
    if (was_no_go) ASSERT_EQ(sig->decision, Decision::NoGo);
    was_no_go = sig->decision == Decision::NoGo;
  }
  EXPECT_TRUE(was_no_go);
  EXPECT_EQ(s.decision(), decide(s.history(), s.config()));
  s.reset_latch();
  EXPECT_EQ(s.decision(), Decision::Go);
  EXPECT_EQ(s.push_distribution(one_hot(Grade::A))->decision, Decision::Go);
}

TEST(Session, FiveClassModelOnly) {
  MonitorSession s(window_of(1), testing::tiny_config(21), testing::random_params(testing::tiny_config(21), 1));
  EXPECT_TRUE(s.push_frame(random_frame(1)).has_value());
  EXPECT_THROW(MonitorSession(window_of(1), testing::tiny_config(3), testing::random_params(testing::tiny_config(3), 1)),
               ConfigError);
  EXPECT_THROW(MonitorSession(window_of(0), frame_model(), frame_params()), ConfigError);
}

TEST(Decide, WorkedExamples) {
  const auto cfg = window_of(1, 5);
  const std::vector<Grade> bad(5, Grade::D);
  EXPECT_EQ(decide(bad, cfg), Decision::NoGo);
  const std::vector<Grade> broken{Grade::D, Grade::D, Grade::A, Grade::D, Grade::D};
  EXPECT_EQ(decide(broken, cfg), Decision::Go);
  const std::vector<Grade> mixed{Grade::E, Grade::D, Grade::E, Grade::D, Grade::E, Grade::A};
  EXPECT_EQ(decide(mixed, cfg), Decision::NoGo);
  const std::vector<Grade> four(4, Grade::E);
  EXPECT_EQ(decide(four, cfg), Decision::Go);
  EXPECT_EQ(decide(std::vector<Grade>{}, cfg), Decision::Go);
}

TEST(DecidedGrade, TiesFollowConfiguredOrder) {
  const GradeDistribution tie{0.0, 0.4, 0.4, 0.2, 0.0};
  EXPECT_EQ(decided_grade(tie, true), Grade::B);
  EXPECT_EQ(decided_grade(tie, false), Grade::C);
  EXPECT_EQ(decided_grade({0.1, 0.1, 0.1, 0.1, 0.6}), Grade::E);
}

TEST(ToGrades, SumsSetPointClasses) {
  std::vector<double> p(21);
  for (std::size_t i = 0; i < 21; ++i) p[i] = static_cast<double>(i + 1) / 231.0;
  const auto g = to_grades(p);
  const auto map = imagegen::setpoint_to_grade_map();
  GradeDistribution expected{};
  for (std::size_t i = 0; i < 21; ++i) expected[map[i]] += p[i];
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(g[k], expected[k], 1e-15);
  const std::vector<double> five{0.1, 0.2, 0.3, 0.2, 0.2};
  EXPECT_EQ(to_grades(five)[2], 0.3);
  EXPECT_THROW(to_grades(std::vector<double>(7, 1.0 / 7)), DomainError);
}

// Multiplies the final dense layer by c, which scales every logit by c.
nn::Parameters scale_logits(nn::Parameters p, double c) {
  auto& last = p.layers[p.layers.size() - 2];
  for (auto& v : last.weights.data()) v *= c;
  for (auto& v : last.bias.data()) v *= c;
  return p;
}

TEST(ArgmaxStability, PerFrameGradeIgnoresLogitScale) {
  for (double c : {0.01, 0.5, 2.0, 50.0}) {
    MonitorSession a(window_of(1), frame_model(), frame_params());
    MonitorSession b(window_of(1), frame_model(), scale_logits(frame_params(), c));
    for (std::uint64_t i = 0; i < 40; ++i) {
      const Image img = random_frame(100 + i);
      ASSERT_EQ(a.push_frame(img)->grade, b.push_frame(img)->grade) << "scale " << c << " frame " << i;
    }
  }
}

TEST(ArgmaxStability, WindowedMeanCanDependOnScale) {
  // Logits (1, 0), (1, 0), (0, 5) over grades A and B: the window mean
  // favours B at scale 1 and A at scale 10.
  auto grade_at = [](double c) {
    MonitorSession s(window_of(3), frame_model(), frame_params());
    auto dist = [c](double za, double zb) {
      GradeDistribution d{};
      const double ea = std::exp(c * za), eb = std::exp(c * zb), rest = 3.0;
      const double sum = ea + eb + rest;
      d = {ea / sum, eb / sum, 1.0 / sum, 1.0 / sum, 1.0 / sum};
      return d;
    };
    s.push_distribution(dist(1, 0));
    s.push_distribution(dist(1, 0));
    return s.push_distribution(dist(0, 5))->grade;
  };
  EXPECT_EQ(grade_at(1.0), Grade::B);
  EXPECT_EQ(grade_at(10.0), Grade::A);
}

// Reference rule: the legal one-step move with the largest badness drop.
std::optional<ProcessState> oracle_remedy(int s, int t, Grade grade) {
  if (grade == Grade::A || grade == Grade::B) return std::nullopt;
  const double here = badness(imagegen::cell_state({s, t}));
  std::optional<ProcessState> best;
  double best_drop = 0.0;
  for (GridCell c : {GridCell{s - 1, t}, GridCell{s, t + 1}}) {
    if (c.speed_index < 0 || c.temp_index > 3) continue;
    const auto st = imagegen::cell_state(c);
    if (imagegen::true_grade(st) == Grade::Failure) continue;
    const double drop = here - badness(st);
    if (drop > best_drop) {
      best_drop = drop;
      best = st;
    }
  }
  return best;
}

TEST(Remedy, ExhaustiveSafetyAndRule) {
  for (const auto& cell : imagegen::valid_cells()) {
    const auto here = imagegen::cell_state(cell);
    for (int g = 0; g < 5; ++g) {
      const auto grade = static_cast<Grade>(g);
      const auto r = suggest_remedy(here, grade);
      const auto expected = oracle_remedy(cell.speed_index, cell.temp_index, grade);
      ASSERT_EQ(r.has_value(), expected.has_value()) << cell.speed_index << "," << cell.temp_index << " " << g;
      if (!r) continue;
      EXPECT_EQ(r->target.speed, expected->speed);
      EXPECT_EQ(r->target.temperature, expected->temperature);
      const auto target_cell = imagegen::find_cell(r->target);
      ASSERT_TRUE(target_cell.has_value());
      EXPECT_NE(imagegen::true_grade(r->target), Grade::Failure);
      EXPECT_LT(badness(r->target), badness(here));
      EXPECT_LE(r->speed_steps, 0);
      EXPECT_GE(r->temperature_steps, 0);
      EXPECT_EQ(std::abs(r->speed_steps) + r->temperature_steps, 1);
      EXPECT_EQ(target_cell->speed_index, cell.speed_index + r->speed_steps);
      EXPECT_EQ(target_cell->temp_index, cell.temp_index + r->temperature_steps);
      EXPECT_FALSE(r->rationale.empty());
      EXPECT_EQ(r->rationale.find('\n'), std::string::npos);
    }
  }
}

TEST(Remedy, WorkedExamples) {
  EXPECT_FALSE(suggest_remedy({400, 230}, Grade::A).has_value());
  EXPECT_FALSE(suggest_remedy({50, 260}, Grade::D).has_value());
  // Speed down: 0.940 -> 0.888. Temperature up: 0.940 -> 0.820.
  const auto r = suggest_remedy({1000, 200}, Grade::E);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->temperature_steps, 1);
  EXPECT_EQ(r->speed_steps, 0);
  EXPECT_EQ(r->target.temperature, 230.0);
  EXPECT_GT(badness({1000, 200}) - badness({1000, 230}), badness({1000, 200}) - badness({800, 200}));
  // From a Failure cell: speed down 0.786 -> 0.624 beats temperature up 0.786 -> 0.726.
  const auto edge = suggest_remedy({400, 185}, Grade::E);
  ASSERT_TRUE(edge.has_value());
  EXPECT_EQ(edge->target.speed, 200.0);
  EXPECT_EQ(edge->target.temperature, 185.0);
  // From 800 mm/s at 185 C speed down would land on a Failure cell.
  const auto blocked = suggest_remedy({800, 185}, Grade::E);
  ASSERT_TRUE(blocked.has_value());
  EXPECT_EQ(blocked->target.speed, 800.0);
  EXPECT_EQ(blocked->target.temperature, 200.0);
}

TEST(Remedy, Errors) {
  EXPECT_THROW(suggest_remedy({120, 200}, Grade::C), DomainError);
  EXPECT_THROW(suggest_remedy({100, 170}, Grade::E), DomainError);
  EXPECT_THROW(suggest_remedy({100, 200}, Grade::Failure), DomainError);
}

TEST(Remedy, AttachedWhenSetPointKnown) {
  MonitorSession s(window_of(1), frame_model(), frame_params(), ProcessState{1000, 200});
  const auto sig = s.push_distribution(one_hot(Grade::E));
  ASSERT_TRUE(sig->remedy.has_value());
  EXPECT_EQ(sig->remedy->target.temperature, 230.0);
  EXPECT_FALSE(s.push_distribution(one_hot(Grade::A))->remedy.has_value());
  MonitorSession none(window_of(1), frame_model(), frame_params());
  EXPECT_FALSE(none.push_distribution(one_hot(Grade::E))->remedy.has_value());
}

TEST(FormatSignal, Layout) {
  QualitySignal s;
  s.frame_index = 12;
  s.grade = Grade::C;
  s.confidence = 0.123456;
  EXPECT_EQ(format_signal(s), "12\tC\t0.1235\tgo\t-");
  s.decision = Decision::NoGo;
  s.remedy = Remedy{-1, 0, {400, 230}, "lower speed"};
  EXPECT_EQ(format_signal(s), "12\tC\t0.1235\tno_go\tlower speed");
}

class StreamTest : public ::testing::Test {
 protected:
  void SetUp() override {
    nn::save_checkpoint(dir_ / "m.amqm", frame_model(), frame_params());
    std::filesystem::create_directories(dir_ / "frames");
    for (int i = 0; i < 12; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "f%03d.pgm", i);
      write_pgm(dir_ / "frames" / name, random_frame(500 + i));
    }
  }
  TempDir dir_{"stream"};
};

TEST_F(StreamTest, DirectoryListAndSessionAgree) {
  const auto frames = frames_from_directory(dir_ / "frames");
  ASSERT_EQ(frames.size(), 12u);
  EXPECT_TRUE(std::is_sorted(frames.begin(), frames.end()));
  std::ostringstream log_a, errors;
  const auto summary = run_stream(window_of(4, 2), dir_ / "m.amqm", frames, log_a, errors);
  EXPECT_EQ(summary.frames, 12u);
  EXPECT_EQ(summary.signals, 9u);
  EXPECT_EQ(errors.str(), "");

  std::stringstream list;
  for (const auto& f : frames) list << f.string() << "\n\n";
  const auto listed = frames_from_list(list);
  EXPECT_EQ(listed, frames);

  // Frame-by-frame replay through a session, reading the stored files.
  const auto ckpt = nn::load_checkpoint(dir_ / "m.amqm");
  MonitorSession s(window_of(4, 2), ckpt.config, ckpt.params);
  std::string replay;
  for (const auto& f : frames) {
    if (auto sig = s.push_frame(read_pgm(f))) replay += format_signal(*sig) + "\n";
  }
  EXPECT_EQ(log_a.str(), replay);
  EXPECT_EQ(summary.decision, s.decision());
}

TEST_F(StreamTest, EmptyAndShortSources) {
  std::ostringstream log, errors;
  const auto empty = run_stream(window_of(4), dir_ / "m.amqm", {}, log, errors);
  EXPECT_EQ(log.str(), "");
  EXPECT_EQ(empty.decision, Decision::Go);
  const auto frames = frames_from_directory(dir_ / "frames");
  const auto shorter = run_stream(window_of(20), dir_ / "m.amqm", frames, log, errors);
  EXPECT_EQ(log.str(), "");
  EXPECT_EQ(shorter.signals, 0u);
}

TEST_F(StreamTest, BadFramesAreSkipped) {
  auto frames = frames_from_directory(dir_ / "frames");
  std::ofstream(dir_ / "broken.pgm") << "P5\n8 8\n255\nxx";
  write_pgm(dir_ / "big.pgm", random_frame(1, 9, 9));
  frames.insert(frames.begin() + 2, dir_ / "broken.pgm");
  frames.insert(frames.begin() + 5, dir_ / "big.pgm");
  frames.insert(frames.begin() + 6, dir_ / "missing.pgm");
  std::ostringstream log, errors;
  const auto summary = run_stream(window_of(1), dir_ / "m.amqm", frames, log, errors);
  EXPECT_EQ(summary.frames, 15u);
  EXPECT_EQ(summary.skipped, 3u);
  EXPECT_EQ(summary.signals, 12u);
  EXPECT_NE(errors.str().find("frame 2"), std::string::npos);
  EXPECT_EQ(log.str().rfind("14\t", 0) == std::string::npos, true);
  EXPECT_NE(log.str().find("\n14\t"), std::string::npos);
}

TEST_F(StreamTest, MissingCheckpointFailsAtStartup) {
  std::ostringstream log, errors;
  EXPECT_THROW(run_stream(window_of(1), dir_ / "none.amqm", {}, log, errors), IoError);
}

TEST(Frames, DirectoryIgnoresOtherFiles) {
  TempDir dir("frames");
  std::ofstream(dir / "b.pgm") << "";
  std::ofstream(dir / "a.pgm") << "";
  std::ofstream(dir / "notes.txt") << "";
  const auto frames = frames_from_directory(dir.path());
  ASSERT_EQ(frames.size(), 2u);
  EXPECT_EQ(frames[0].filename(), "a.pgm");
  EXPECT_THROW(frames_from_directory(dir / "nope"), IoError);
}

}  // namespace
}  // namespace amq::monitor
