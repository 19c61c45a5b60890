#pragma once

// Synthetic layer-image generator. Defect content of each rendered layer
// is a monotone function of extruder speed and temperature.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "amq/image.hpp"

namespace amq::imagegen {

inline constexpr double kMinSpeed = 50.0;
inline constexpr double kMaxSpeed = 1000.0;
inline constexpr double kMinTemperature = 185.0;
inline constexpr double kMaxTemperature = 260.0;

inline constexpr std::array<double, 6> kGridSpeeds{50, 100, 200, 400, 800, 1000};
inline constexpr std::array<double, 4> kGridTemperatures{185, 200, 230, 260};
inline constexpr std::size_t kSetPointClasses = 21;
inline constexpr std::size_t kGradeClasses = 5;

struct ProcessState {
  double speed = kMinSpeed;              // mm/s
  double temperature = kMaxTemperature;  // degrees C
};

// Throws DomainError if either field is non-finite or out of range.
void validate(const ProcessState& state);

enum class Grade : std::uint8_t { A = 0, B, C, D, E, Failure };

char grade_letter(Grade g);
Grade grade_from_letter(char c);  // 'A'..'E', 'X' for Failure

// One cell of the 6x4 speed x temperature grid.
struct GridCell {
  int speed_index = 0;
  int temp_index = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

bool on_grid(const GridCell& cell) noexcept;
ProcessState cell_state(const GridCell& cell);
// Maps a state lying exactly on a grid node to its cell.
std::optional<GridCell> find_cell(const ProcessState& state);

// Scalar defect propensity:
//   b = clamp(0.7 u + 0.3 (1 - v), 0, 1)
//   u = ln(speed / 50) / ln 20, v = (temperature - 185) / 75
double badness(const ProcessState& state);

// Failure iff temperature < 190 and speed > 200; otherwise badness
// thresholded at 0.2 / 0.4 / 0.6 / 0.8 into A..E.
Grade true_grade(const ProcessState& state);

// Grade label per grid cell, indexed [speed_index][temp_index].
struct GradeTable {
  std::array<std::array<Grade, 4>, 6> cells{};

  Grade at(const GridCell& c) const { return cells[c.speed_index][c.temp_index]; }

  // Table derived from true_grade at every grid node.
  static GradeTable standard();
  // Six '/'-separated rows of four letters, rows in speed order, columns in
  // temperature order, 'X' for Failure, e.g. "BBAA/CCBA/DCCB/XDDC/XEDD/XEED".
  static GradeTable parse(std::string_view text);
  std::string to_string() const;
};

// The valid (non-Failure) cells of `table` in speed-major order. The
// position in this list is the set-point class index.
std::vector<GridCell> valid_cells(const GradeTable& table = GradeTable::standard());
std::size_t setpoint_class_index(const GridCell& cell, const GradeTable& table = GradeTable::standard());
GridCell setpoint_class_cell(std::size_t index, const GradeTable& table = GradeTable::standard());
// Set-point class -> grade index (0..4).
std::vector<std::size_t> setpoint_to_grade_map(const GradeTable& table = GradeTable::standard());

struct DefectModel {
  int max_voids = 12;
  int max_overfill = 6;
};

struct DefectField {
  std::uint32_t void_count = 0;
  std::uint32_t overfill_count = 0;
  double bead_jitter = 0.0;
  double badness = 0.0;
  int expected_voids = 0;
  int expected_overfill = 0;
  friend bool operator==(const DefectField&, const DefectField&) = default;
};

// round(max_voids * clamp(0.8 u + 0.4 (1 - v), 0, 1))
int expected_void_count(const ProcessState& state, const DefectModel& model = {});
// round(max_overfill * v * (1 - u))
int expected_overfill_count(const ProcessState& state, const DefectModel& model = {});

// Realized counts are Poisson draws around the expectations;
// bead_jitter = 0.05 (1 + 2 badness).
DefectField defect_field(const ProcessState& state, std::uint64_t seed, const DefectModel& model = {});

struct RenderOptions {
  std::size_t width = 64;
  std::size_t height = 64;
  double noise_sigma = 0.02;
  DefectModel defects{};
};

inline constexpr double kBackgroundLevel = 0.10;
inline constexpr double kBeadLevel = 0.60;
inline constexpr double kVoidLevel = 0.05;
inline constexpr double kOverfillLevel = 0.95;

// Top view of one deposited layer: parallel beads (horizontal on even
// layers, vertical on odd), dark voids, bright overfill blobs, pixel noise.
// Pure function of (state, layer_index, seed, options). Throws DomainError
// when true_grade(state) is Failure.
Image render_layer(const ProcessState& state, std::uint32_t layer_index, std::uint64_t seed,
                   const RenderOptions& options = {});

}  // namespace amq::imagegen
