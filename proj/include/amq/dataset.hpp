#pragma once

// On-disk synthetic datasets: planning runs per class, rendering them to
// graymaps, the CSV manifest, and loading a manifest back as tensors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amq/imagegen.hpp"
#include "amq/train.hpp"

namespace amq::imagegen {

enum class LabelMode { Grade, SetPoint };

LabelMode parse_label_mode(const std::string& text);  // "grade" | "setpoint"
std::string label_mode_name(LabelMode mode);
std::size_t class_count(LabelMode mode);

enum class Split { Train, Test };

struct GenerationConfig {
  std::size_t train_per_class = 50;
  std::size_t test_per_class = 10;
  LabelMode labels = LabelMode::Grade;
  RenderOptions render{};
  std::uint64_t seed = 1;
  std::size_t layers_per_run = 10;
  GradeTable table = GradeTable::standard();
  std::filesystem::path out_dir;
};

struct ManifestRecord {
  std::uint32_t run_id = 0;
  std::uint32_t layer = 0;
  double speed = 0.0;
  double temperature = 0.0;
  std::size_t setpoint_class = 0;
  Grade grade = Grade::A;
  Split split = Split::Train;
  std::string filename;  // relative to the manifest's directory
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;  // sorted by (run_id, layer)
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// One print run: `layers` consecutive layers at one grid cell.
struct RunPlan {
  std::uint32_t run_id = 0;
  GridCell cell;
  std::size_t class_index = 0;
  std::size_t layers = 0;
  std::uint64_t seed = 0;
};

// Splits each class's train+test quota evenly over the class's cells, then
// each cell's quota into floor(quota / layers_per_run) runs with layers
// spread evenly, so every run has at least layers_per_run layers. Run seeds
// are derive_seed(master, {run_id}). Throws ConfigError when a cell's quota
// is below layers_per_run or a class has no cells.
std::vector<RunPlan> plan_runs(const GenerationConfig& config);

// Renders every planned run into <out_dir>/images/, picks test items per
// class by seeded sampling without replacement, and writes
// <out_dir>/manifest.csv last. Throws IoError if out_dir is not writable.
DatasetManifest generate_dataset(const GenerationConfig& config);

inline constexpr const char* kManifestHeader = "run_id,layer,speed_mms,temp_c,setpoint_class,grade,split,filename";

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct LoadedDataset {
  nn::Dataset data;
  std::vector<ManifestRecord> train_records;  // parallel to data.train
  std::vector<ManifestRecord> test_records;   // parallel to data.test
  std::size_t width = 0;
  std::size_t height = 0;
};

// Reads every image referenced by the manifest, applies
// normalize_intensity, and labels items by grade or set-point class.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path, LabelMode mode);

// Network input offset: a normalized image in [0, 1] enters the model as
// pixel - 0.5.
inline constexpr double kInputOffset = 0.5;

// 1 x H x W tensor of a normalized image, shifted by kInputOffset.
nn::Tensor image_to_tensor(const Image& image);

}  // namespace amq::imagegen
