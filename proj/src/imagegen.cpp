#include "amq/imagegen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "amq/errors.hpp"
#include "amq/rng.hpp"

namespace amq::imagegen {

namespace {

double speed_term(const ProcessState& s) { return std::log(s.speed / kMinSpeed) / std::log(kMaxSpeed / kMinSpeed); }

double temperature_term(const ProcessState& s) {
  return (s.temperature - kMinTemperature) / (kMaxTemperature - kMinTemperature);
}

}  // namespace

void validate(const ProcessState& state) {
  if (!std::isfinite(state.speed) || state.speed < kMinSpeed || state.speed > kMaxSpeed) {
    throw DomainError("speed " + std::to_string(state.speed) + " mm/s outside [50, 1000]");
  }
  if (!std::isfinite(state.temperature) || state.temperature < kMinTemperature ||
      state.temperature > kMaxTemperature) {
    throw DomainError("temperature " + std::to_string(state.temperature) + " C outside [185, 260]");
  }
}

char grade_letter(Grade g) {
  switch (g) {
    case Grade::A: return 'A';
    case Grade::B: return 'B';
    case Grade::C: return 'C';
    case Grade::D: return 'D';
    case Grade::E: return 'E';
    case Grade::Failure: return 'X';
  }
  return '?';
}

Grade grade_from_letter(char c) {
  switch (c) {
    case 'A': return Grade::A;
    case 'B': return Grade::B;
    case 'C': return Grade::C;
    case 'D': return Grade::D;
    case 'E': return Grade::E;
    case 'X': return Grade::Failure;
    default: throw DomainError(std::string("unknown grade letter '") + c + "'");
  }
}

bool on_grid(const GridCell& cell) noexcept {
  return cell.speed_index >= 0 && cell.speed_index < static_cast<int>(kGridSpeeds.size()) && cell.temp_index >= 0 &&
         cell.temp_index < static_cast<int>(kGridTemperatures.size());
}

ProcessState cell_state(const GridCell& cell) {
  if (!on_grid(cell)) {
    throw DomainError("grid cell (" + std::to_string(cell.speed_index) + ", " + std::to_string(cell.temp_index) +
                      ") off the 6x4 grid");
  }
  return {kGridSpeeds[cell.speed_index], kGridTemperatures[cell.temp_index]};
}

std::optional<GridCell> find_cell(const ProcessState& state) {
  const auto s = std::find(kGridSpeeds.begin(), kGridSpeeds.end(), state.speed);
  const auto t = std::find(kGridTemperatures.begin(), kGridTemperatures.end(), state.temperature);
  if (s == kGridSpeeds.end() || t == kGridTemperatures.end()) return std::nullopt;
  return GridCell{static_cast<int>(s - kGridSpeeds.begin()), static_cast<int>(t - kGridTemperatures.begin())};
}

double badness(const ProcessState& state) {
  validate(state);
  return std::clamp(0.7 * speed_term(state) + 0.3 * (1.0 - temperature_term(state)), 0.0, 1.0);
}

Grade true_grade(const ProcessState& state) {
  validate(state);
  if (state.temperature < 190.0 && state.speed > 200.0) return Grade::Failure;
  const double b = badness(state);
  if (b < 0.2) return Grade::A;
  if (b < 0.4) return Grade::B;
  if (b < 0.6) return Grade::C;
  if (b < 0.8) return Grade::D;
  return Grade::E;
}

GradeTable GradeTable::standard() {
  GradeTable t;
  for (int s = 0; s < 6; ++s) {
    for (int k = 0; k < 4; ++k) t.cells[s][k] = true_grade(cell_state({s, k}));
  }
  return t;
}

GradeTable GradeTable::parse(std::string_view text) {
  GradeTable t;
  std::size_t pos = 0;
  for (int s = 0; s < 6; ++s) {
    if (s > 0) {
      if (pos >= text.size() || text[pos] != '/') throw DomainError("grade table: expected '/' between rows");
      ++pos;
    }
    for (int k = 0; k < 4; ++k) {
      if (pos >= text.size()) throw DomainError("grade table: too few entries");
      t.cells[s][k] = grade_from_letter(text[pos++]);
    }
  }
  if (pos != text.size()) throw DomainError("grade table: trailing characters");
  return t;
}

std::string GradeTable::to_string() const {
  std::string out;
  for (int s = 0; s < 6; ++s) {
    if (s > 0) out += '/';
    for (int k = 0; k < 4; ++k) out += grade_letter(cells[s][k]);
  }
  return out;
}

std::vector<GridCell> valid_cells(const GradeTable& table) {
  std::vector<GridCell> cells;
  for (int s = 0; s < 6; ++s) {
    for (int k = 0; k < 4; ++k) {
      if (table.cells[s][k] != Grade::Failure) cells.push_back({s, k});
    }
  }
  return cells;
}

std::size_t setpoint_class_index(const GridCell& cell, const GradeTable& table) {
  const auto cells = valid_cells(table);
  const auto it = std::find(cells.begin(), cells.end(), cell);
  if (it == cells.end()) throw DomainError("grid cell is off-grid or a Failure cell");
  return static_cast<std::size_t>(it - cells.begin());
}

GridCell setpoint_class_cell(std::size_t index, const GradeTable& table) {
  const auto cells = valid_cells(table);
  if (index >= cells.size()) throw DomainError("set-point class " + std::to_string(index) + " out of range");
  return cells[index];
}

std::vector<std::size_t> setpoint_to_grade_map(const GradeTable& table) {
  std::vector<std::size_t> map;
  for (const auto& c : valid_cells(table)) map.push_back(static_cast<std::size_t>(table.at(c)));
  return map;
}

int expected_void_count(const ProcessState& state, const DefectModel& model) {
  validate(state);
  const double density = std::clamp(0.8 * speed_term(state) + 0.4 * (1.0 - temperature_term(state)), 0.0, 1.0);
  return static_cast<int>(std::lround(model.max_voids * density));
}

int expected_overfill_count(const ProcessState& state, const DefectModel& model) {
  validate(state);
  return static_cast<int>(std::lround(model.max_overfill * temperature_term(state) * (1.0 - speed_term(state))));
}

DefectField defect_field(const ProcessState& state, std::uint64_t seed, const DefectModel& model) {
  DefectField f;
  f.badness = badness(state);
  f.expected_voids = expected_void_count(state, model);
  f.expected_overfill = expected_overfill_count(state, model);
  f.bead_jitter = 0.05 * (1.0 + 2.0 * f.badness);
  Rng rng(seed);
  f.void_count = rng.poisson(f.expected_voids);
  f.overfill_count = rng.poisson(f.expected_overfill);
  return f;
}

namespace {

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / rx;
    const double dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
};

void fill_ellipse(Image& img, const Ellipse& e, double level) {
  const auto w = static_cast<long>(img.width());
  const auto h = static_cast<long>(img.height());
  const long x0 = std::max(0L, static_cast<long>(std::floor(e.cx - e.rx)));
  const long x1 = std::min(w - 1, static_cast<long>(std::ceil(e.cx + e.rx)));
  const long y0 = std::max(0L, static_cast<long>(std::floor(e.cy - e.ry)));
  const long y1 = std::min(h - 1, static_cast<long>(std::ceil(e.cy + e.ry)));
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      if (e.contains(x + 0.5, y + 0.5)) img.at(x, y) = level;
    }
  }
}

}  // namespace

Image render_layer(const ProcessState& state, std::uint32_t layer_index, std::uint64_t seed,
                   const RenderOptions& options) {
  if (true_grade(state) == Grade::Failure) {
    throw DomainError("render_layer: set point (" + std::to_string(state.speed) + " mm/s, " +
                      std::to_string(state.temperature) + " C) fails to print; no layer image exists");
  }
  if (options.width < 8 || options.height < 8) throw DomainError("render_layer: image must be at least 8x8");
  if (!(options.noise_sigma >= 0.0)) throw DomainError("render_layer: noise sigma must be >= 0");

  const DefectField field = defect_field(state, derive_seed(seed, {layer_index, 1}), options.defects);
  Rng rng(derive_seed(seed, {layer_index, 2}));

  const std::size_t width = options.width;
  const std::size_t height = options.height;
  Image img(width, height, kBackgroundLevel);

  // Bead geometry in (along, across) coordinates; odd layers run vertically.
  const bool horizontal = layer_index % 2 == 0;
  const std::size_t along_len = horizontal ? width : height;
  const std::size_t across_len = horizontal ? height : width;
  const double scale = static_cast<double>(std::min(width, height)) / 64.0;
  const double pitch = 6.0 * scale;
  // Underextrusion thins the beads as badness rises.
  const double nominal = pitch * (1.0 - 0.8 * field.badness);
  const std::size_t segment = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(4.0 * scale)));
  const std::size_t segments = (along_len + segment - 1) / segment;
  const double phase = rng.uniform() * pitch;
  const auto beads = static_cast<std::size_t>(std::ceil(across_len / pitch)) + 2;

  // widths[bead * segments + seg]; bead b is centred at phase + (b - 1) pitch.
  std::vector<double> widths(beads * segments);
  for (auto& w : widths) {
    w = std::clamp(nominal * (1.0 + field.bead_jitter * rng.normal()), 0.2 * nominal, 1.2 * pitch);
  }

  for (std::size_t along = 0; along < along_len; ++along) {
    const std::size_t seg = along / segment;
    for (std::size_t across = 0; across < across_len; ++across) {
      const double c = static_cast<double>(across) + 0.5;
      const double rel = (c - phase) / pitch + 1.0;
      const auto nearest = static_cast<long>(std::floor(rel));
      double coverage = 0.0;
      for (long b = nearest - 1; b <= nearest + 1; ++b) {
        if (b < 0 || b >= static_cast<long>(beads)) continue;
        const double centre = phase + (static_cast<double>(b) - 1.0) * pitch + 0.5 * pitch;
        const double half = 0.5 * widths[static_cast<std::size_t>(b) * segments + seg];
        coverage = std::max(coverage, std::clamp(half - std::abs(c - centre) + 0.5, 0.0, 1.0));
      }
      const double level = kBackgroundLevel + (kBeadLevel - kBackgroundLevel) * coverage;
      if (horizontal) {
        img.at(along, across) = level;
      } else {
        img.at(across, along) = level;
      }
    }
  }

  // Voids elongate along the bead direction and grow with badness.
  for (std::uint32_t i = 0; i < field.void_count; ++i) {
    const double cx = rng.uniform() * width;
    const double cy = rng.uniform() * height;
    const double long_axis = (1.0 + 2.0 * rng.uniform()) * scale * (1.0 + field.badness);
    const double short_axis = (0.8 + 0.8 * rng.uniform()) * scale;
    const Ellipse e = horizontal ? Ellipse{cx, cy, long_axis, short_axis} : Ellipse{cx, cy, short_axis, long_axis};
    fill_ellipse(img, e, kVoidLevel);
  }
  for (std::uint32_t i = 0; i < field.overfill_count; ++i) {
    const double cx = rng.uniform() * width;
    const double cy = rng.uniform() * height;
    const double r = (1.2 + 1.3 * rng.uniform()) * scale;
    fill_ellipse(img, {cx, cy, r, r}, kOverfillLevel);
  }

  if (options.noise_sigma > 0.0) {
    for (auto& p : img.pixels()) p = std::clamp(p + options.noise_sigma * rng.normal(), 0.0, 1.0);
  }
  return img;
}

}  // namespace amq::imagegen
