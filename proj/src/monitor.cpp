#include "amq/monitor.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "amq/checkpoint.hpp"
#include "amq/dataset.hpp"
#include "amq/errors.hpp"
#include "amq/io.hpp"
#include "amq/train.hpp"

namespace amq::monitor {

namespace fs = std::filesystem;

std::string decision_name(Decision d) { return d == Decision::Go ? "go" : "no_go"; }

void MonitorConfig::validate() const {
  if (window_size == 0) throw ConfigError("monitor window size must be at least 1");
  if (stop_after == 0) throw ConfigError("monitor stop-after count must be at least 1");
}

namespace {

std::string describe_state(const ProcessState& s) {
  return io::format_real(s.speed) + " mm/s, " + io::format_real(s.temperature) + " C";
}

}  // namespace

std::optional<Remedy> suggest_remedy(const ProcessState& current, Grade grade) {
  const auto cell = imagegen::find_cell(current);
  if (!cell) throw DomainError("suggest_remedy: (" + describe_state(current) + ") is not a grid set point");
  if (grade == Grade::Failure) throw DomainError("suggest_remedy: decided grade must be A..E");
  if (grade == Grade::A || grade == Grade::B) return std::nullopt;

  const double now = imagegen::badness(current);
  std::optional<Remedy> best;
  double best_badness = now;
  const std::array<imagegen::GridCell, 2> moves{imagegen::GridCell{cell->speed_index - 1, cell->temp_index},
                                                imagegen::GridCell{cell->speed_index, cell->temp_index + 1}};
  for (std::size_t m = 0; m < moves.size(); ++m) {
    const auto& to = moves[m];
    if (!imagegen::on_grid(to)) continue;
    const ProcessState target = imagegen::cell_state(to);
    if (imagegen::true_grade(target) == Grade::Failure) continue;
    const double b = imagegen::badness(target);
    if (b >= best_badness) continue;
    Remedy r;
    r.speed_steps = m == 0 ? -1 : 0;
    r.temperature_steps = m == 1 ? 1 : 0;
    r.target = target;
    r.rationale = (m == 0 ? "lower speed to " + io::format_real(target.speed) + " mm/s"
                          : "raise temperature to " + io::format_real(target.temperature) + " C") +
                  " (badness " + io::format_fixed(now, 3) + " -> " + io::format_fixed(b, 3) + ")";
    best = r;
    best_badness = b;
  }
  return best;
}

Decision decide(std::span<const Grade> history, const MonitorConfig& config) {
  config.validate();
  std::size_t streak = 0;
  for (Grade g : history) {
    streak = config.is_no_go(g) ? streak + 1 : 0;
    if (streak >= config.stop_after) return Decision::NoGo;
  }
  return Decision::Go;
}

Grade decided_grade(const GradeDistribution& mean, bool ties_to_better_grade) {
  std::size_t best = ties_to_better_grade ? 0 : mean.size() - 1;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const bool better = ties_to_better_grade ? mean[k] > mean[best] : mean[k] >= mean[best];
    if (better) best = k;
  }
  return static_cast<Grade>(best);
}

GradeDistribution to_grades(std::span<const double> probs, const imagegen::GradeTable& table) {
  GradeDistribution out{};
  if (probs.size() == imagegen::kGradeClasses) {
    std::copy(probs.begin(), probs.end(), out.begin());
    return out;
  }
  const auto map = imagegen::setpoint_to_grade_map(table);
  if (probs.size() != map.size()) {
    throw DomainError("monitor: model outputs " + std::to_string(probs.size()) + " classes, expected " +
                      std::to_string(imagegen::kGradeClasses) + " or " + std::to_string(map.size()));
  }
  for (std::size_t s = 0; s < probs.size(); ++s) out[map[s]] += probs[s];
  return out;
}

MonitorSession::MonitorSession(MonitorConfig config, nn::ModelConfig model, nn::Parameters params,
                               std::optional<ProcessState> set_point, imagegen::GradeTable table)
    : config_(config), model_(std::move(model)), params_(std::move(params)), set_point_(set_point), table_(table) {
  config_.validate();
  model_.validate();
  if (model_.in_channels != 1) throw ConfigError("monitor: model must take single-channel images");
  if (model_.n_classes != imagegen::kGradeClasses && model_.n_classes != imagegen::valid_cells(table_).size()) {
    throw ConfigError("monitor: model outputs " + std::to_string(model_.n_classes) +
                      " classes; expected 5 grades or one class per valid set point");
  }
  if (set_point_ && !imagegen::find_cell(*set_point_)) {
    throw DomainError("monitor: set point (" + describe_state(*set_point_) + ") is not on the grid");
  }
}

std::optional<QualitySignal> MonitorSession::push_frame(const Image& image) {
  if (image.width() != model_.in_width || image.height() != model_.in_height) {
    throw DomainError("monitor: frame is " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                      ", model expects " + std::to_string(model_.in_width) + "x" +
                      std::to_string(model_.in_height));
  }
  const nn::Tensor probs = nn::predict(model_, params_, imagegen::image_to_tensor(normalize_intensity(image)));
  return push_distribution(to_grades(probs.data(), table_));
}

std::optional<QualitySignal> MonitorSession::push_distribution(const GradeDistribution& frame) {
  const std::size_t index = frames_seen_++;
  window_.push_back(frame);
  if (window_.size() > config_.window_size) window_.pop_front();
  if (frames_seen_ < config_.window_size) return std::nullopt;

  QualitySignal s;
  s.frame_index = index;
  for (const auto& d : window_) {
    for (std::size_t k = 0; k < d.size(); ++k) s.distribution[k] += d[k];
  }
  for (auto& v : s.distribution) v /= static_cast<double>(window_.size());
  s.grade = decided_grade(s.distribution, config_.ties_to_better_grade);
  s.confidence = s.distribution[static_cast<std::size_t>(s.grade)];

  history_.push_back(s.grade);
  streak_ = config_.is_no_go(s.grade) ? streak_ + 1 : 0;
  if (streak_ >= config_.stop_after) latched_ = true;
  s.decision = decision();
  if (set_point_) s.remedy = suggest_remedy(*set_point_, s.grade);
  return s;
}

void MonitorSession::reset_latch() noexcept {
  latched_ = false;
  streak_ = 0;
}

std::vector<fs::path> frames_from_directory(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("frame directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".PGM") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return out;
}

std::vector<fs::path> frames_from_list(std::istream& in) {
  std::vector<fs::path> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.emplace_back(line);
  }
  return out;
}

std::string format_signal(const QualitySignal& signal) {
  return std::to_string(signal.frame_index) + '\t' + imagegen::grade_letter(signal.grade) + '\t' +
         io::format_fixed(signal.confidence, 4) + '\t' + decision_name(signal.decision) + '\t' +
         (signal.remedy ? signal.remedy->rationale : std::string("-"));
}

StreamSummary run_stream(const MonitorConfig& config, const fs::path& checkpoint, std::span<const fs::path> frames,
                         std::ostream& log, std::ostream& errors, std::optional<ProcessState> set_point) {
  auto ckpt = nn::load_checkpoint(checkpoint);
  MonitorSession session(config, std::move(ckpt.config), std::move(ckpt.params), set_point);
  StreamSummary summary;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    ++summary.frames;
    std::optional<QualitySignal> signal;
    try {
      signal = session.push_frame(read_pgm(frames[i]));
    } catch (const std::exception& e) {
      errors << "frame " << i << " (" << frames[i].string() << "): " << e.what() << " - skipped\n";
      ++summary.skipped;
      continue;
    }
    if (!signal) continue;
    signal->frame_index = i;
    log << format_signal(*signal) << '\n';
    ++summary.signals;
  }
  log.flush();
  summary.decision = session.decision();
  return summary;
}

}  // namespace amq::monitor
