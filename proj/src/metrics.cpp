#include "amq/metrics.hpp"

#include <numeric>

#include "amq/errors.hpp"
#include "amq/io.hpp"

namespace amq::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0) {
  if (n_classes == 0) throw DomainError("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes, std::vector<std::uint64_t> counts)
    : n_(n_classes), counts_(std::move(counts)) {
  if (n_classes == 0) throw DomainError("confusion matrix needs at least one class");
  if (counts_.size() != n_ * n_) throw DomainError("confusion matrix needs n*n counts");
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < n_; ++i) t += counts_[i * n_ + i];
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < n_; ++j) s += at(c, j);
  return s;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < n_; ++i) s += at(i, c);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> true_labels, std::span<const std::size_t> predicted,
                                 std::size_t n_classes) {
  if (true_labels.size() != predicted.size()) {
    throw DomainError("confusion_matrix: " + std::to_string(true_labels.size()) + " true labels vs " +
                      std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    if (true_labels[i] >= n_classes || predicted[i] >= n_classes) {
      throw DomainError("confusion_matrix: label out of range at sample " + std::to_string(i));
    }
    ++cm.at(true_labels[i], predicted[i]);
  }
  return cm;
}

ClassCounts class_counts(const ConfusionMatrix& cm, std::size_t c) {
  if (c >= cm.n_classes()) throw DomainError("class_counts: class out of range");
  ClassCounts k;
  k.tp = cm.at(c, c);
  k.fp = cm.column_sum(c) - k.tp;
  k.fn = cm.row_sum(c) - k.tp;
  k.tn = cm.total() - k.tp - k.fp - k.fn;
  return k;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  if (den == 0) {
    undefined = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassMetrics class_metrics(const ClassCounts& k) {
  if (k.total() == 0) throw DomainError("class_metrics: no samples");
  ClassMetrics m;
  m.precision = ratio(k.tp, k.tp + k.fp, m.undefined.precision);
  m.sensitivity = ratio(k.tp, k.tp + k.fn, m.undefined.sensitivity);
  m.specificity = ratio(k.tn, k.fp + k.tn, m.undefined.specificity);
  m.f_score = ratio(2 * k.tp, 2 * k.tp + k.fp + k.fn, m.undefined.f_score);
  bool never = false;
  m.accuracy = ratio(k.tp + k.tn, k.total(), never);
  return m;
}

ClassMetrics average_metrics(std::span<const ClassMetrics> per_class) {
  if (per_class.empty()) throw DomainError("average_metrics: no classes");
  ClassMetrics avg;
  for (const auto& m : per_class) {
    avg.precision += m.precision;
    avg.sensitivity += m.sensitivity;
    avg.specificity += m.specificity;
    avg.f_score += m.f_score;
    avg.accuracy += m.accuracy;
    avg.undefined.precision |= m.undefined.precision;
    avg.undefined.sensitivity |= m.undefined.sensitivity;
    avg.undefined.specificity |= m.undefined.specificity;
    avg.undefined.f_score |= m.undefined.f_score;
  }
  const auto n = static_cast<double>(per_class.size());
  avg.precision /= n;
  avg.sensitivity /= n;
  avg.specificity /= n;
  avg.f_score /= n;
  avg.accuracy /= n;
  return avg;
}

MetricsReport macro_report(const ConfusionMatrix& cm, Averaging averaging) {
  if (cm.total() == 0) throw DomainError("macro_report: empty confusion matrix");
  MetricsReport r;
  r.averaging = averaging;
  for (std::size_t c = 0; c < cm.n_classes(); ++c) r.per_class.push_back(class_metrics(class_counts(cm, c)));
  if (averaging == Averaging::Macro) {
    r.average = average_metrics(r.per_class);
  } else {
    const double total = static_cast<double>(cm.total());
    ClassMetrics avg;
    for (std::size_t c = 0; c < cm.n_classes(); ++c) {
      const double w = static_cast<double>(cm.row_sum(c)) / total;
      const auto& m = r.per_class[c];
      avg.precision += w * m.precision;
      avg.sensitivity += w * m.sensitivity;
      avg.specificity += w * m.specificity;
      avg.f_score += w * m.f_score;
      avg.accuracy += w * m.accuracy;
    }
    r.average = avg;
  }
  r.total_accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  return r;
}

ConfusionMatrix collapse_classes(const ConfusionMatrix& cm, std::span<const std::size_t> mapping,
                                 std::size_t n_coarse) {
  if (mapping.size() != cm.n_classes()) {
    throw DomainError("collapse_classes: mapping covers " + std::to_string(mapping.size()) + " of " +
                      std::to_string(cm.n_classes()) + " classes");
  }
  for (std::size_t s = 0; s < mapping.size(); ++s) {
    if (mapping[s] >= n_coarse) throw DomainError("collapse_classes: class " + std::to_string(s) + " unmapped");
  }
  ConfusionMatrix merged(n_coarse);
  for (std::size_t s = 0; s < cm.n_classes(); ++s) {
    for (std::size_t t = 0; t < cm.n_classes(); ++t) merged.at(mapping[s], mapping[t]) += cm.at(s, t);
  }
  return merged;
}

GridMask default_region_mask() {
  GridMask m{};
  for (std::size_t s = 0; s < 6; ++s) {
    for (std::size_t t = 0; t < 4; ++t) m[s][t] = s < 2 || t == 3;
  }
  return m;
}

GridRegionReport grid_region_report(const GridValues& accuracy, const GridMask& mask) {
  GridRegionReport r;
  double inside = 0.0, outside = 0.0;
  for (std::size_t s = 0; s < 6; ++s) {
    for (std::size_t t = 0; t < 4; ++t) {
      if (!accuracy[s][t]) continue;
      if (mask[s][t]) {
        inside += *accuracy[s][t];
        ++r.inside_cells;
      } else {
        outside += *accuracy[s][t];
        ++r.outside_cells;
      }
    }
  }
  if (r.inside_cells == 0) throw DomainError("grid_region_report: region contains no valued cells");
  if (r.outside_cells == 0) throw DomainError("grid_region_report: no valued cells outside the region");
  r.inside_mean = inside / static_cast<double>(r.inside_cells);
  r.outside_mean = outside / static_cast<double>(r.outside_cells);
  return r;
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report,
                      std::span<const std::string> class_names) {
  if (class_names.size() != report.per_class.size()) throw DomainError("write_report_csv: class name count mismatch");
  auto row = [](std::ostream& out, const std::string& name, const ClassMetrics& m) {
    out << name << ',' << io::format_real(m.precision) << ',' << io::format_real(m.sensitivity) << ','
        << io::format_real(m.specificity) << ',' << io::format_real(m.f_score) << ',' << io::format_real(m.accuracy)
        << '\n';
  };
  io::write_atomically(path, false, [&](std::ostream& out) {
    out << "class,precision,sensitivity,specificity,f_score,accuracy\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) row(out, class_names[c], report.per_class[c]);
    row(out, report.averaging == Averaging::Macro ? "macro" : "weighted", report.average);
  });
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         std::span<const std::string> class_names) {
  if (class_names.size() != cm.n_classes()) throw DomainError("write_confusion_csv: class name count mismatch");
  io::write_atomically(path, false, [&](std::ostream& out) {
    out << "true\\predicted";
    for (const auto& n : class_names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < cm.n_classes(); ++i) {
      out << class_names[i];
      for (std::size_t j = 0; j < cm.n_classes(); ++j) out << ',' << cm.at(i, j);
      out << '\n';
    }
  });
}

}  // namespace amq::metrics
