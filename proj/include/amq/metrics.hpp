#pragma once

// Confusion matrices and the five one-vs-rest classification metrics.
// Orientation: rows are true classes, columns are predicted classes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace amq::metrics {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes);
  ConfusionMatrix(std::size_t n_classes, std::vector<std::uint64_t> counts);

  std::size_t n_classes() const noexcept { return n_; }
  std::uint64_t at(std::size_t true_class, std::size_t predicted) const { return counts_[true_class * n_ + predicted]; }
  std::uint64_t& at(std::size_t true_class, std::size_t predicted) { return counts_[true_class * n_ + predicted]; }

  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;
  std::uint64_t row_sum(std::size_t c) const;
  std::uint64_t column_sum(std::size_t c) const;
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

// Throws DomainError on length mismatch, labels >= n_classes, or n_classes == 0.
ConfusionMatrix confusion_matrix(std::span<const std::size_t> true_labels, std::span<const std::size_t> predicted,
                                 std::size_t n_classes);

struct ClassCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

// One-vs-rest reduction of class c.
ClassCounts class_counts(const ConfusionMatrix& cm, std::size_t c);

// Which metrics had a zero denominator (and were therefore set to 0).
struct ZeroDenominators {
  bool precision = false;
  bool sensitivity = false;
  bool specificity = false;
  bool f_score = false;
  bool any() const noexcept { return precision || sensitivity || specificity || f_score; }
};

struct ClassMetrics {
  double precision = 0.0;    // TP / (TP + FP)
  double sensitivity = 0.0;  // TP / (TP + FN)
  double specificity = 0.0;  // TN / (FP + TN)
  double f_score = 0.0;      // 2 TP / (2 TP + FP + FN)
  double accuracy = 0.0;     // (TP + TN) / total
  ZeroDenominators undefined{};
};

// Throws DomainError when the counts sum to zero.
ClassMetrics class_metrics(const ClassCounts& counts);

enum class Averaging { Macro, Weighted };

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  ClassMetrics average;   // macro (unweighted) unless built with Averaging::Weighted
  double total_accuracy;  // trace / total
  Averaging averaging = Averaging::Macro;
};

// Per-class metrics plus their average. Weighted averaging weights each
// class by its true-class support. Throws DomainError on an empty matrix.
MetricsReport macro_report(const ConfusionMatrix& cm, Averaging averaging = Averaging::Macro);

// Averages already-computed per-class values (e.g. published figures).
ClassMetrics average_metrics(std::span<const ClassMetrics> per_class);

// merged[g][h] = sum of cm[s][t] over s -> g and t -> h. `mapping[s]` is
// the coarse class of fine class s. Throws DomainError when mapping does
// not cover every fine class or maps outside [0, n_coarse).
ConfusionMatrix collapse_classes(const ConfusionMatrix& cm, std::span<const std::size_t> mapping,
                                 std::size_t n_coarse);

// Accuracy per cell of the speed x temperature grid; nullopt for cells
// without a value (Failure cells, or cells with no test items).
using GridValues = std::array<std::array<std::optional<double>, 4>, 6>;
using GridMask = std::array<std::array<bool, 4>, 6>;

struct GridRegionReport {
  double inside_mean = 0.0;
  double outside_mean = 0.0;
  std::size_t inside_cells = 0;
  std::size_t outside_cells = 0;
};

// Cells of the high-accuracy region: the two slowest speeds at every
// temperature plus the hottest temperature at every speed.
GridMask default_region_mask();

// Unweighted means of the valued cells inside and outside `mask`. Throws
// DomainError when either side has no valued cells.
GridRegionReport grid_region_report(const GridValues& accuracy, const GridMask& mask);

// CSV `class,precision,sensitivity,specificity,f_score,accuracy` with one
// row per class plus a `macro` (or `weighted`) row.
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report,
                      std::span<const std::string> class_names);

// Square CSV grid; the header row and first column carry class names.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         std::span<const std::string> class_names);

}  // namespace amq::metrics
