#include "amq/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "amq/errors.hpp"
#include "amq/io.hpp"
#include "amq/rng.hpp"

namespace amq::imagegen {

namespace fs = std::filesystem;

LabelMode parse_label_mode(const std::string& text) {
  if (text == "grade") return LabelMode::Grade;
  if (text == "setpoint") return LabelMode::SetPoint;
  throw ConfigError("labels must be 'grade' or 'setpoint', got '" + text + "'");
}

std::string label_mode_name(LabelMode mode) { return mode == LabelMode::Grade ? "grade" : "setpoint"; }

std::size_t class_count(LabelMode mode) { return mode == LabelMode::Grade ? kGradeClasses : kSetPointClasses; }

namespace {

// Cells belonging to each class, in set-point order.
std::vector<std::vector<GridCell>> cells_per_class(const GenerationConfig& config) {
  const auto cells = valid_cells(config.table);
  std::vector<std::vector<GridCell>> out;
  if (config.labels == LabelMode::SetPoint) {
    for (const auto& c : cells) out.push_back({c});
  } else {
    out.resize(kGradeClasses);
    for (const auto& c : cells) out[static_cast<std::size_t>(config.table.at(c))].push_back(c);
  }
  return out;
}

std::string image_name(std::uint32_t run, std::uint32_t layer) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "images/r%05u_l%03u.pgm", run, layer);
  return buf;
}

}  // namespace

std::vector<RunPlan> plan_runs(const GenerationConfig& config) {
  if (config.layers_per_run == 0) throw ConfigError("layers per run must be positive");
  if (config.train_per_class + config.test_per_class == 0) throw ConfigError("per-class counts are both zero");
  const auto classes = cells_per_class(config);
  const std::size_t quota = config.train_per_class + config.test_per_class;
  std::vector<RunPlan> plan;
  std::uint32_t run_id = 0;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& cells = classes[k];
    if (cells.empty()) throw ConfigError("class " + std::to_string(k) + " has no grid cells in the grade table");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::size_t cell_quota = quota / cells.size() + (i < quota % cells.size() ? 1 : 0);
      const std::size_t runs = cell_quota / config.layers_per_run;
      if (runs == 0) {
        throw ConfigError("class " + std::to_string(k) + " needs " + std::to_string(cell_quota) +
                          " images from one cell, fewer than the " + std::to_string(config.layers_per_run) +
                          " layers a run must contribute");
      }
      for (std::size_t r = 0; r < runs; ++r) {
        RunPlan p;
        p.run_id = run_id;
        p.cell = cells[i];
        p.class_index = k;
        p.layers = cell_quota / runs + (r < cell_quota % runs ? 1 : 0);
        p.seed = derive_seed(config.seed, {run_id});
        plan.push_back(p);
        ++run_id;
      }
    }
  }
  return plan;
}

DatasetManifest generate_dataset(const GenerationConfig& config) {
  if (config.out_dir.empty()) throw ConfigError("output directory not set");
  const auto plan = plan_runs(config);
  for (const auto& run : plan) {
    if (true_grade(cell_state(run.cell)) == Grade::Failure) {
      throw ConfigError("grade table labels a failing set point as printable");
    }
  }
  io::ensure_directory(config.out_dir / "images");

  DatasetManifest manifest;
  std::vector<std::vector<std::size_t>> by_class(class_count(config.labels));
  for (const auto& run : plan) {
    const ProcessState state = cell_state(run.cell);
    for (std::uint32_t layer = 0; layer < run.layers; ++layer) {
      ManifestRecord rec;
      rec.run_id = run.run_id;
      rec.layer = layer;
      rec.speed = state.speed;
      rec.temperature = state.temperature;
      rec.setpoint_class = setpoint_class_index(run.cell, config.table);
      rec.grade = config.table.at(run.cell);
      rec.filename = image_name(run.run_id, layer);
      write_pgm(config.out_dir / rec.filename, render_layer(state, layer, run.seed, config.render));
      by_class[run.class_index].push_back(manifest.records.size());
      manifest.records.push_back(std::move(rec));
    }
  }

  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& members = by_class[k];
    Rng rng(derive_seed(config.seed, {0x73706c6974, k}));
    // Partial Fisher-Yates: the first test_per_class slots become the sample.
    for (std::size_t i = 0; i < config.test_per_class; ++i) {
      std::swap(members[i], members[i + rng.below(members.size() - i)]);
      manifest.records[members[i]].split = Split::Test;
    }
  }

  write_manifest(config.out_dir / "manifest.csv", manifest);
  return manifest;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  io::write_atomically(path, false, [&](std::ostream& out) {
    out << kManifestHeader << '\n';
    for (const auto& r : manifest.records) {
      out << r.run_id << ',' << r.layer << ',' << io::format_real(r.speed) << ',' << io::format_real(r.temperature)
          << ',' << r.setpoint_class << ',' << grade_letter(r.grade) << ','
          << (r.split == Split::Train ? "train" : "test") << ',' << r.filename << '\n';
    }
  });
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || (line != kManifestHeader && line != std::string(kManifestHeader) + "\r")) {
    throw FormatError("manifest " + path.string() + ": unexpected header");
  }
  DatasetManifest m;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (f.size() != 8) throw FormatError(where + "expected 8 fields, got " + std::to_string(f.size()));
    try {
      ManifestRecord r;
      r.run_id = static_cast<std::uint32_t>(io::parse_uint(f[0]));
      r.layer = static_cast<std::uint32_t>(io::parse_uint(f[1]));
      r.speed = io::parse_real(f[2]);
      r.temperature = io::parse_real(f[3]);
      r.setpoint_class = io::parse_uint(f[4]);
      if (f[5].size() != 1) throw FormatError("bad grade '" + f[5] + "'");
      r.grade = grade_from_letter(f[5][0]);
      if (f[6] == "train") {
        r.split = Split::Train;
      } else if (f[6] == "test") {
        r.split = Split::Test;
      } else {
        throw FormatError("bad split '" + f[6] + "'");
      }
      r.filename = f[7];
      m.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw FormatError(where + e.what());
    }
  }
  return m;
}

nn::Tensor image_to_tensor(const Image& image) {
  std::vector<double> values(image.pixels().begin(), image.pixels().end());
  for (auto& v : values) v -= kInputOffset;
  return nn::Tensor({1, image.height(), image.width()}, std::move(values));
}

LoadedDataset load_dataset(const fs::path& manifest_path, LabelMode mode) {
  const auto manifest = read_manifest(manifest_path);
  const fs::path root = manifest_path.parent_path();
  LoadedDataset out;
  out.data.n_classes = class_count(mode);
  for (const auto& rec : manifest.records) {
    if (rec.grade == Grade::Failure) throw FormatError("manifest references a Failure set point");
    const std::size_t label = mode == LabelMode::Grade ? static_cast<std::size_t>(rec.grade) : rec.setpoint_class;
    if (label >= out.data.n_classes) throw FormatError("manifest label out of range: " + rec.filename);
    const Image img = normalize_intensity(read_pgm(root / rec.filename));
    if (out.width == 0) {
      out.width = img.width();
      out.height = img.height();
    } else if (img.width() != out.width || img.height() != out.height) {
      throw FormatError("image " + rec.filename + " size differs from the rest of the dataset");
    }
    auto& set = rec.split == Split::Train ? out.data.train : out.data.test;
    set.inputs.push_back(image_to_tensor(img));
    set.labels.push_back(label);
    (rec.split == Split::Train ? out.train_records : out.test_records).push_back(rec);
  }
  return out;
}

}  // namespace amq::imagegen
