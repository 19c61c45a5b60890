#pragma once

// Streaming go/no-go monitor over layer images.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amq/image.hpp"
#include "amq/imagegen.hpp"
#include "amq/model.hpp"

namespace amq::monitor {

using imagegen::Grade;
using imagegen::ProcessState;

using GradeDistribution = std::array<double, imagegen::kGradeClasses>;

enum class Decision { Go, NoGo };
std::string decision_name(Decision d);  // "go", "no_go"

struct MonitorConfig {
  std::size_t window_size = 15;
  std::array<bool, imagegen::kGradeClasses> no_go_grades{false, false, false, true, true};
  std::size_t stop_after = 5;  // consecutive no-go signals before latching
  // Ties in the windowed mean go to the better grade unless false.
  bool ties_to_better_grade = true;

  bool is_no_go(Grade g) const { return no_go_grades.at(static_cast<std::size_t>(g)); }
  // Throws ConfigError when window_size or stop_after is 0.
  void validate() const;
};

struct Remedy {
  int speed_steps = 0;        // <= 0
  int temperature_steps = 0;  // >= 0
  ProcessState target;
  std::string rationale;
};

struct QualitySignal {
  std::size_t frame_index = 0;
  GradeDistribution distribution{};
  Grade grade = Grade::A;
  double confidence = 0.0;
  Decision decision = Decision::Go;
  std::optional<Remedy> remedy;
};

// The one-step grid move (speed down or temperature up) that lowers
// badness the most, ignoring moves off the grid or onto Failure cells.
// None for grades A and B, or when no legal move lowers badness. Throws
// DomainError when `current` is not a grid node or `grade` is Failure.
std::optional<Remedy> suggest_remedy(const ProcessState& current, Grade grade);

// No-go iff some run of `stop_after` consecutive grades in the history are
// all no-go grades; the decision latches from that point on.
Decision decide(std::span<const Grade> history, const MonitorConfig& config);

// Index of the largest probability with grade-order tie breaking.
Grade decided_grade(const GradeDistribution& mean, bool ties_to_better_grade = true);

// Sums a 21-class set-point distribution into grades; a 5-class
// distribution passes through. Throws DomainError for other sizes.
GradeDistribution to_grades(std::span<const double> probs,
                            const imagegen::GradeTable& table = imagegen::GradeTable::standard());

class MonitorSession {
 public:
  // The model must output 5 grades or 21 set-point classes. `set_point`
  // enables remedy suggestions.
  MonitorSession(MonitorConfig config, nn::ModelConfig model, nn::Parameters params,
                 std::optional<ProcessState> set_point = std::nullopt,
                 imagegen::GradeTable table = imagegen::GradeTable::standard());

  // Normalizes and classifies one frame. Throws DomainError when the image
  // size differs from the model input.
  std::optional<QualitySignal> push_frame(const Image& image);

  // Same with an already computed per-frame grade distribution.
  std::optional<QualitySignal> push_distribution(const GradeDistribution& frame);

  Decision decision() const noexcept { return latched_ ? Decision::NoGo : Decision::Go; }
  std::size_t frames_seen() const noexcept { return frames_seen_; }
  const std::vector<Grade>& history() const noexcept { return history_; }
  const MonitorConfig& config() const noexcept { return config_; }

  // Manual reset of the no-go latch and the streak counter.
  void reset_latch() noexcept;

 private:
  MonitorConfig config_;
  nn::ModelConfig model_;
  nn::Parameters params_;
  std::optional<ProcessState> set_point_;
  imagegen::GradeTable table_;
  std::deque<GradeDistribution> window_;
  std::vector<Grade> history_;
  std::size_t frames_seen_ = 0;
  std::size_t streak_ = 0;
  bool latched_ = false;
};

// Graymap files in a directory, sorted by file name.
std::vector<std::filesystem::path> frames_from_directory(const std::filesystem::path& dir);
// One path per nonblank line.
std::vector<std::filesystem::path> frames_from_list(std::istream& in);

// `frame_index \t grade \t confidence \t decision \t remedy-or-dash`
std::string format_signal(const QualitySignal& signal);

struct StreamSummary {
  std::size_t frames = 0;
  std::size_t skipped = 0;
  std::size_t signals = 0;
  Decision decision = Decision::Go;
};

// Loads the checkpoint (IoError/FormatError at startup), then pushes each
// frame in order and writes one log line per signal. A frame that cannot be
// read or has the wrong size is reported on `errors` and skipped. Signal
// frame indices are positions in `frames`.
StreamSummary run_stream(const MonitorConfig& config, const std::filesystem::path& checkpoint,
                         std::span<const std::filesystem::path> frames, std::ostream& log, std::ostream& errors,
                         std::optional<ProcessState> set_point = std::nullopt);

}  // namespace amq::monitor
