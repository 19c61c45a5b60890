#include "amq/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "amq/checkpoint.hpp"
#include "amq/dataset.hpp"
#include "amq/errors.hpp"
#include "amq/io.hpp"
#include "amq/metrics.hpp"
#include "amq/monitor.hpp"
#include "amq/sweep.hpp"
#include "amq/train.hpp"

namespace amq::cli {

namespace fs = std::filesystem;
using imagegen::Grade;
using imagegen::LabelMode;

namespace {

using Settings = std::vector<std::pair<std::string, std::string>>;

void print_settings(std::ostream& out, const std::string& command, const Settings& settings, std::uint64_t seed) {
  out << "amq " << command << '\n';
  for (const auto& [k, v] : settings) out << "  " << k << " = " << v << '\n';
  out << "  master seed = " << seed << '\n';
  out.flush();
}

fs::path manifest_path(const std::string& data) {
  fs::path p(data);
  std::error_code ec;
  if (fs::is_directory(p, ec)) p /= "manifest.csv";
  if (!fs::exists(p, ec)) throw IoError("dataset manifest " + p.string() + " does not exist");
  return p;
}

fs::path require_out(const std::string& out) {
  if (out.empty()) throw ConfigError("no output directory: pass --out or set AMQ_OUT");
  io::ensure_directory(out);
  return fs::path(out);
}

std::vector<std::string> grade_names() { return {"A", "B", "C", "D", "E"}; }

std::vector<std::string> setpoint_names() {
  std::vector<std::string> names;
  for (const auto& c : imagegen::valid_cells()) {
    const auto s = imagegen::cell_state(c);
    names.push_back("v" + io::format_real(s.speed) + "_t" + io::format_real(s.temperature));
  }
  return names;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  for (const auto& field : io::split_csv_line(text)) {
    std::string f = field;
    f.erase(std::remove_if(f.begin(), f.end(), [](unsigned char c) { return std::isspace(c); }), f.end());
    if (f.empty()) continue;
    values.push_back(io::parse_real(f));
  }
  if (values.empty()) throw ConfigError("--values needs at least one number");
  return values;
}

std::array<bool, imagegen::kGradeClasses> parse_grade_set(const std::string& text) {
  std::array<bool, imagegen::kGradeClasses> set{};
  for (char c : text) {
    if (c == ',' || c == ' ') continue;
    const Grade g = imagegen::grade_from_letter(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (g == Grade::Failure) throw ConfigError("no-go grades must be letters A..E");
    set[static_cast<std::size_t>(g)] = true;
  }
  return set;
}

imagegen::ProcessState parse_set_point(const std::string& text) {
  const auto f = io::split_csv_line(text);
  if (f.size() != 2) throw ConfigError("set point must be 'speed,temperature', got '" + text + "'");
  imagegen::ProcessState s{io::parse_real(f[0]), io::parse_real(f[1])};
  if (!imagegen::find_cell(s)) throw ConfigError("set point '" + text + "' is not a grid node");
  return s;
}

// "speed:temp" cells separated by commas; '*' matches any value.
metrics::GridMask parse_region(const std::string& text) {
  metrics::GridMask mask{};
  for (const auto& item : io::split_csv_line(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("region cell '" + item + "' must be speed:temp");
    const std::string sp = item.substr(0, colon), tp = item.substr(colon + 1);
    bool matched = false;
    for (std::size_t s = 0; s < imagegen::kGridSpeeds.size(); ++s) {
      for (std::size_t t = 0; t < imagegen::kGridTemperatures.size(); ++t) {
        const bool speed_ok = sp == "*" || io::parse_real(sp) == imagegen::kGridSpeeds[s];
        const bool temp_ok = tp == "*" || io::parse_real(tp) == imagegen::kGridTemperatures[t];
        if (speed_ok && temp_ok) {
          mask[s][t] = true;
          matched = true;
        }
      }
    }
    if (!matched) throw ConfigError("region cell '" + item + "' matches no grid node");
  }
  return mask;
}

std::string region_string(const metrics::GridMask& mask) {
  std::string out;
  for (std::size_t s = 0; s < 6; ++s) {
    for (std::size_t t = 0; t < 4; ++t) {
      if (!mask[s][t]) continue;
      if (!out.empty()) out += ',';
      out += io::format_real(imagegen::kGridSpeeds[s]) + ':' + io::format_real(imagegen::kGridTemperatures[t]);
    }
  }
  return out;
}

// ---- gen ----

struct GenArgs {
  std::size_t train_per_class = 50;
  std::size_t test_per_class = 10;
  std::string labels = "grade";
  std::uint64_t seed = 1;
  std::size_t layers_per_run = 10;
  std::size_t width = 64;
  std::size_t height = 64;
  double noise = 0.02;
  std::string grade_table = imagegen::GradeTable::standard().to_string();
  std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  imagegen::GenerationConfig g;
  g.train_per_class = a.train_per_class;
  g.test_per_class = a.test_per_class;
  g.labels = imagegen::parse_label_mode(a.labels);
  g.seed = a.seed;
  g.layers_per_run = a.layers_per_run;
  g.render.width = a.width;
  g.render.height = a.height;
  g.render.noise_sigma = a.noise;
  g.table = imagegen::GradeTable::parse(a.grade_table);
  print_settings(out, "gen",
                 {{"train-per-class", std::to_string(a.train_per_class)},
                  {"test-per-class", std::to_string(a.test_per_class)},
                  {"labels", imagegen::label_mode_name(g.labels)},
                  {"layers-per-run", std::to_string(a.layers_per_run)},
                  {"width", std::to_string(a.width)},
                  {"height", std::to_string(a.height)},
                  {"noise", io::format_real(a.noise)},
                  {"grade-table", g.table.to_string()},
                  {"out", a.out}},
                 a.seed);
  g.out_dir = require_out(a.out);
  const auto manifest = imagegen::generate_dataset(g);
  std::size_t train = 0;
  for (const auto& r : manifest.records) train += r.split == imagegen::Split::Train;
  out << "wrote " << manifest.records.size() << " images (" << train << " train, " << manifest.records.size() - train
      << " test) and " << (g.out_dir / "manifest.csv").string() << '\n';
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string labels = "grade";
  std::size_t epochs = 50;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool quiet = false;
  std::string out;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const LabelMode mode = imagegen::parse_label_mode(a.labels);
  print_settings(out, "train",
                 {{"data", a.data},
                  {"labels", imagegen::label_mode_name(mode)},
                  {"epochs", std::to_string(a.epochs)},
                  {"lr", io::format_real(a.learning_rate)},
                  {"batch-size", std::to_string(a.batch_size)},
                  {"threads", std::to_string(a.threads)},
                  {"out", a.out}},
                 a.seed);
  const fs::path dir = require_out(a.out);
  const auto loaded = imagegen::load_dataset(manifest_path(a.data), mode);
  const auto config = nn::ModelConfig::standard(loaded.height, loaded.width, loaded.data.n_classes);
  nn::Hyperparams hp;
  hp.epochs = a.epochs;
  hp.learning_rate = a.learning_rate;
  hp.batch_size = a.batch_size;
  hp.seed = a.seed;
  hp.threads = a.threads;
  const auto result = nn::train(config, loaded.data, hp, [&](const nn::EpochRecord& r) {
    if (a.quiet) return;
    out << "epoch " << r.epoch << '/' << a.epochs << "  loss " << io::format_fixed(r.mean_loss, 4) << "  train "
        << io::format_fixed(r.train_accuracy, 4) << "  test " << io::format_fixed(r.test_accuracy, 4) << "  "
        << io::format_fixed(r.wall_seconds, 1) << "s\n";
    out.flush();
  });
  nn::save_checkpoint(dir / "model.amqm", config, result.params);
  nn::write_trace_csv(dir / "trace.csv", result.trace);
  const auto& last = result.trace.epochs.back();
  if (result.trace.diverged) out << "training diverged at epoch " << last.epoch << "; kept the last finite weights\n";
  out << "final test accuracy " << io::format_fixed(last.test_accuracy, 4) << "; wrote "
      << (dir / "model.amqm").string() << " and " << (dir / "trace.csv").string() << '\n';
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string model;
  std::string data;
  std::string split = "test";
  std::size_t classes = 0;
  bool collapse = false;
  bool grid_report = false;
  std::string region;
  std::string averaging = "macro";
  std::size_t threads = 1;
  std::uint64_t seed = 1;
  std::string out;
};

void write_report(const fs::path& dir, const std::string& stem, const metrics::ConfusionMatrix& cm,
                  metrics::Averaging averaging, const std::vector<std::string>& names, std::ostream& out) {
  const auto report = metrics::macro_report(cm, averaging);
  metrics::write_confusion_csv(dir / ("confusion" + stem + ".csv"), cm, names);
  metrics::write_report_csv(dir / ("report" + stem + ".csv"), report, names);
  out << cm.n_classes() << "-class: total accuracy " << io::format_fixed(report.total_accuracy, 4) << ", "
      << (averaging == metrics::Averaging::Macro ? "macro" : "weighted") << " precision "
      << io::format_fixed(report.average.precision, 4) << ", sensitivity "
      << io::format_fixed(report.average.sensitivity, 4) << ", specificity "
      << io::format_fixed(report.average.specificity, 4) << ", F-score " << io::format_fixed(report.average.f_score, 4)
      << '\n';
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.split != "test" && a.split != "train") throw ConfigError("--split must be test or train");
  if (a.averaging != "macro" && a.averaging != "weighted") throw ConfigError("--averaging must be macro or weighted");
  const metrics::GridMask region = a.region.empty() ? metrics::default_region_mask() : parse_region(a.region);
  print_settings(out, "eval",
                 {{"model", a.model},
                  {"data", a.data},
                  {"split", a.split},
                  {"classes", a.classes ? std::to_string(a.classes) : "from model"},
                  {"collapse", a.collapse ? "true" : "false"},
                  {"grid-report", a.grid_report ? "true" : "false"},
                  {"region", region_string(region)},
                  {"averaging", a.averaging},
                  {"threads", std::to_string(a.threads)},
                  {"out", a.out}},
                 a.seed);
  const fs::path dir = require_out(a.out);
  const auto ckpt = nn::load_checkpoint(a.model);
  const std::size_t n = ckpt.config.n_classes;
  if (n != imagegen::kGradeClasses && n != imagegen::kSetPointClasses) {
    throw ConfigError("model has " + std::to_string(n) + " outputs; expected 5 or 21");
  }
  if (a.classes != 0 && a.classes != n) {
    throw ConfigError("--classes " + std::to_string(a.classes) + " does not match the model's " + std::to_string(n) +
                      " outputs");
  }
  if (a.collapse && n != imagegen::kSetPointClasses) throw ConfigError("--collapse needs a 21-class model");
  const LabelMode mode = n == imagegen::kGradeClasses ? LabelMode::Grade : LabelMode::SetPoint;
  const auto loaded = imagegen::load_dataset(manifest_path(a.data), mode);
  if (loaded.width != ckpt.config.in_width || loaded.height != ckpt.config.in_height) {
    throw ConfigError("dataset images are " + std::to_string(loaded.width) + "x" + std::to_string(loaded.height) +
                      ", model expects " + std::to_string(ckpt.config.in_width) + "x" +
                      std::to_string(ckpt.config.in_height));
  }
  const bool test = a.split == "test";
  const auto& set = test ? loaded.data.test : loaded.data.train;
  const auto& records = test ? loaded.test_records : loaded.train_records;
  const auto predicted = nn::predict_classes(ckpt.config, ckpt.params, set, a.threads);
  const auto cm = metrics::confusion_matrix(set.labels, predicted, n);
  const auto averaging = a.averaging == "macro" ? metrics::Averaging::Macro : metrics::Averaging::Weighted;
  write_report(dir, "", cm, averaging, mode == LabelMode::Grade ? grade_names() : setpoint_names(), out);
  if (a.collapse) {
    const auto map = imagegen::setpoint_to_grade_map();
    write_report(dir, "_collapsed", metrics::collapse_classes(cm, map, imagegen::kGradeClasses), averaging,
                 grade_names(), out);
  }
  if (a.grid_report) {
    std::array<std::array<std::size_t, 4>, 6> items{}, correct{};
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto cell = imagegen::find_cell({records[i].speed, records[i].temperature});
      if (!cell) throw FormatError("manifest row for run " + std::to_string(records[i].run_id) + " is off the grid");
      ++items[cell->speed_index][cell->temp_index];
      correct[cell->speed_index][cell->temp_index] += predicted[i] == set.labels[i];
    }
    metrics::GridValues acc{};
    io::write_atomically(dir / "grid.csv", false, [&](std::ostream& f) {
      f << "speed_mms,temp_c,grade,items,correct,accuracy,in_region\n";
      for (std::size_t s = 0; s < 6; ++s) {
        for (std::size_t t = 0; t < 4; ++t) {
          const imagegen::GridCell c{static_cast<int>(s), static_cast<int>(t)};
          const auto state = imagegen::cell_state(c);
          f << io::format_real(state.speed) << ',' << io::format_real(state.temperature) << ','
            << imagegen::grade_letter(imagegen::true_grade(state)) << ',' << items[s][t] << ',' << correct[s][t] << ',';
          if (items[s][t] > 0) {
            acc[s][t] = static_cast<double>(correct[s][t]) / static_cast<double>(items[s][t]);
            f << io::format_real(*acc[s][t]);
          }
          f << ',' << (region[s][t] ? 1 : 0) << '\n';
        }
      }
    });
    const auto r = metrics::grid_region_report(acc, region);
    io::write_atomically(dir / "region.csv", false, [&](std::ostream& f) {
      f << "region,cells,mean_accuracy\n";
      f << "inside," << r.inside_cells << ',' << io::format_real(r.inside_mean) << '\n';
      f << "outside," << r.outside_cells << ',' << io::format_real(r.outside_mean) << '\n';
    });
    out << "grid region: inside mean " << io::format_fixed(r.inside_mean, 4) << " over " << r.inside_cells
        << " cells, outside mean " << io::format_fixed(r.outside_mean, 4) << " over " << r.outside_cells << " cells\n";
  }
  out << "wrote reports to " << dir.string() << '\n';
  return kExitOk;
}

// ---- sweep ----

struct SweepArgs {
  std::string data;
  std::string labels = "grade";
  std::string axis;
  std::string values;
  std::size_t repetitions = 3;
  std::size_t epochs = 50;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t parallel = 1;
  std::string out;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  sweep::SweepSpec spec;
  spec.axis = sweep::parse_axis(a.axis);
  spec.values = parse_values(a.values);
  spec.repetitions = a.repetitions;
  spec.parallel_runs = a.parallel;
  spec.base.epochs = a.epochs;
  spec.base.learning_rate = a.learning_rate;
  spec.base.batch_size = a.batch_size;
  spec.base.seed = a.seed;
  const LabelMode mode = imagegen::parse_label_mode(a.labels);
  std::string values;
  for (double v : spec.values) values += (values.empty() ? "" : ",") + io::format_real(v);
  print_settings(out, "sweep",
                 {{"data", a.data},
                  {"labels", imagegen::label_mode_name(mode)},
                  {"axis", sweep::axis_name(spec.axis)},
                  {"values", values},
                  {"repetitions", std::to_string(a.repetitions)},
                  {"epochs", std::to_string(a.epochs)},
                  {"lr", io::format_real(a.learning_rate)},
                  {"batch-size", std::to_string(a.batch_size)},
                  {"parallel", std::to_string(a.parallel)},
                  {"out", a.out}},
                 a.seed);
  const fs::path dir = require_out(a.out);
  const auto loaded = imagegen::load_dataset(manifest_path(a.data), mode);
  const auto config = nn::ModelConfig::standard(loaded.height, loaded.width, loaded.data.n_classes);
  sweep::SweepResult result;
  if (spec.axis == sweep::Axis::Epoch) {
    const auto trace = sweep::epoch_sweep(config, loaded.data, spec);
    nn::write_trace_csv(dir / "trace.csv", trace);
    result = sweep::epoch_points(spec, trace);
  } else {
    result = sweep::run_sweep(config, loaded.data, spec);
  }
  sweep::emit_csv(result, dir / "sweep.csv");
  for (const auto& [value, acc] : sweep::mean_test_accuracy(result)) {
    out << sweep::axis_name(spec.axis) << ' ' << io::format_real(value) << ": mean test accuracy "
        << io::format_fixed(acc, 4) << '\n';
  }
  out << "wrote " << (dir / "sweep.csv").string() << '\n';
  return kExitOk;
}

// ---- monitor ----

struct MonitorArgs {
  std::string model;
  std::string frames;
  std::size_t window = 15;
  std::size_t stop_after = 5;
  std::string no_go = "DE";
  std::string ties = "better";
  std::string set_point;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_monitor(const MonitorArgs& a, std::ostream& out, std::ostream& err, std::istream& in) {
  monitor::MonitorConfig mc;
  mc.window_size = a.window;
  mc.stop_after = a.stop_after;
  mc.no_go_grades = parse_grade_set(a.no_go);
  if (a.ties != "better" && a.ties != "worse") throw ConfigError("--ties must be better or worse");
  mc.ties_to_better_grade = a.ties == "better";
  mc.validate();
  std::optional<imagegen::ProcessState> set_point;
  if (!a.set_point.empty()) set_point = parse_set_point(a.set_point);
  print_settings(out, "monitor",
                 {{"model", a.model},
                  {"frames", a.frames},
                  {"window", std::to_string(a.window)},
                  {"stop-after", std::to_string(a.stop_after)},
                  {"no-go", a.no_go},
                  {"ties", a.ties},
                  {"set-point", a.set_point.empty() ? "none" : a.set_point},
                  {"out", a.out}},
                 a.seed);
  const fs::path dir = require_out(a.out);
  const auto frames = a.frames == "-" ? monitor::frames_from_list(in) : monitor::frames_from_directory(a.frames);
  monitor::StreamSummary summary;
  io::write_atomically(dir / "signals.tsv", false, [&](std::ostream& log) {
    summary = monitor::run_stream(mc, a.model, frames, log, err, set_point);
  });
  out << summary.frames << " frames, " << summary.skipped << " skipped, " << summary.signals
      << " signals; decision " << monitor::decision_name(summary.decision) << "; log "
      << (dir / "signals.tsv").string() << '\n';
  return summary.decision == monitor::Decision::Go ? kExitOk : kExitNoGo;
}

// ---- config files ----

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Turns key=value lines of every --config file given to the subcommand into
// --key=value arguments placed ahead of the command-line flags, which
// therefore win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& app) {
  if (args.empty()) return args;
  const CLI::App* sub = nullptr;
  for (const auto* s : app.get_subcommands([](const CLI::App*) { return true; })) {
    if (s->get_name() == args[0]) sub = s;
  }
  if (!sub) return args;
  std::vector<std::string> injected;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string file;
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      continue;
    }
    std::ifstream f(file);
    if (!f) throw IoError("cannot read config file " + file);
    std::string line;
    for (std::size_t n = 1; std::getline(f, line); ++n) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(file + ":" + std::to_string(n) + ": expected key=value");
      std::string key = trim(line.substr(0, eq));
      std::replace(key.begin(), key.end(), '_', '-');
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || key == "config" || !sub->get_option_no_throw("--" + key)) {
        throw ConfigError(file + ":" + std::to_string(n) + ": unknown key '" + key + "' for " + sub->get_name());
      }
      injected.push_back("--" + key + "=" + value);
    }
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
  CLI::App app{"Additive-manufacturing layer-image quality toolkit", "amq"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::string config_file;

  auto add_out = [](CLI::App* s, std::string& target) {
    s->add_option("--out", target, "Output directory (default: $AMQ_OUT)")->envname("AMQ_OUT");
  };
  auto add_config = [&](CLI::App* s) {
    s->add_option("--config", config_file, "key=value file; command-line flags take precedence");
  };

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Render a synthetic layer-image dataset and its manifest");
  g->add_option("--train-per-class", gen.train_per_class, "Training images per class")->capture_default_str();
  g->add_option("--test-per-class", gen.test_per_class, "Test images per class")->capture_default_str();
  g->add_option("--labels", gen.labels, "Class scheme for the quotas: grade or setpoint")->capture_default_str();
  g->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  g->add_option("--layers-per-run", gen.layers_per_run, "Minimum layers per print run")->capture_default_str();
  g->add_option("--width", gen.width, "Image width in pixels")->capture_default_str();
  g->add_option("--height", gen.height, "Image height in pixels")->capture_default_str();
  g->add_option("--noise", gen.noise, "Pixel noise standard deviation")->capture_default_str();
  g->add_option("--grade-table", gen.grade_table, "Grade per grid cell, rows by speed, X = failure")
      ->capture_default_str();
  add_out(g, gen.out);
  add_config(g);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the CNN; writes model.amqm and trace.csv");
  t->add_option("--data", tr.data, "Dataset directory or manifest.csv")->required();
  t->add_option("--labels", tr.labels, "Target: grade (5 classes) or setpoint (21 classes)")->capture_default_str();
  t->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
  t->add_option("--lr", tr.learning_rate, "SGD learning rate")->capture_default_str();
  t->add_option("--batch-size", tr.batch_size, "Mini-batch size")->capture_default_str();
  t->add_option("--seed", tr.seed, "Master seed")->capture_default_str();
  t->add_option("--threads", tr.threads, "Worker threads per batch (results do not depend on it)")
      ->capture_default_str();
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress");
  add_out(t, tr.out);
  add_config(t);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Confusion matrix and metric reports for a checkpoint");
  e->add_option("--model", ev.model, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory or manifest.csv")->required();
  e->add_option("--split", ev.split, "test or train")->capture_default_str();
  e->add_option("--classes", ev.classes, "Expected model classes: 21 or 5 (default: from the model)")
      ->check(CLI::IsMember({0, 5, 21}));
  e->add_flag("--collapse", ev.collapse, "Also report a 21-class model's predictions merged into grades");
  e->add_flag("--grid-report", ev.grid_report, "Per-cell accuracy over the speed x temperature grid");
  e->add_option("--region", ev.region, "Grid region as speed:temp cells, '*' wildcard (default 50:*,100:*,*:260)");
  e->add_option("--averaging", ev.averaging, "macro or weighted")->capture_default_str();
  e->add_option("--threads", ev.threads, "Worker threads")->capture_default_str();
  e->add_option("--seed", ev.seed, "Master seed (recorded only)")->capture_default_str();
  add_out(e, ev.out);
  add_config(e);

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Hyperparameter sweep; writes sweep.csv");
  s->add_option("--data", sw.data, "Dataset directory or manifest.csv")->required();
  s->add_option("--labels", sw.labels, "grade or setpoint")->capture_default_str();
  s->add_option("--axis", sw.axis, "epoch, learning_rate or batch_size")->required();
  s->add_option("--values", sw.values, "Comma-separated increasing values")->required();
  s->add_option("--repetitions", sw.repetitions, "Runs per value")->capture_default_str();
  s->add_option("--epochs", sw.epochs, "Epochs when not swept")->capture_default_str();
  s->add_option("--lr", sw.learning_rate, "Learning rate when not swept")->capture_default_str();
  s->add_option("--batch-size", sw.batch_size, "Batch size when not swept")->capture_default_str();
  s->add_option("--seed", sw.seed, "Master seed")->capture_default_str();
  s->add_option("--parallel", sw.parallel, "Runs trained concurrently")->capture_default_str();
  add_out(s, sw.out);
  add_config(s);

  MonitorArgs mo;
  auto* m = app.add_subcommand("monitor", "Stream layer frames through a checkpoint; exit 0 go, 2 no-go");
  m->add_option("--model", mo.model, "Checkpoint file")->required();
  m->add_option("--frames", mo.frames, "Directory of .pgm frames, or - for a path list on stdin")->required();
  m->add_option("--window", mo.window, "Frames per window")->capture_default_str();
  m->add_option("--stop-after", mo.stop_after, "Consecutive no-go windows before latching")->capture_default_str();
  m->add_option("--no-go", mo.no_go, "Grades that count as no-go")->capture_default_str();
  m->add_option("--ties", mo.ties, "Tie breaking between grades: better or worse")->capture_default_str();
  m->add_option("--set-point", mo.set_point, "Current speed,temperature for remedy suggestions");
  m->add_option("--seed", mo.seed, "Master seed (recorded only)")->capture_default_str();
  add_out(m, mo.out);
  add_config(m);

  try {
    auto expanded = expand_config(args, app);
    std::reverse(expanded.begin(), expanded.end());
    app.parse(expanded);
  } catch (const CLI::ParseError& pe) {
    if (pe.get_exit_code() == 0) {
      app.exit(pe, out, err);
      return kExitOk;
    }
    err << "amq: " << pe.what() << '\n';
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
      if (!args.empty() && sub->get_name() == args[0]) target = sub;
    }
    err << target->help();
    return kExitError;
  } catch (const std::exception& ex) {
    err << "amq: " << ex.what() << '\n';
    return kExitError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "gen") return cmd_gen(gen, out);
    if (command == "train") return cmd_train(tr, out);
    if (command == "eval") return cmd_eval(ev, out);
    if (command == "sweep") return cmd_sweep(sw, out);
    return cmd_monitor(mo, out, err, in);
  } catch (const std::exception& ex) {
    err << "amq " << command << ": " << ex.what() << '\n';
    return kExitError;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr, std::cin);
}

}  // namespace amq::cli
