#include "dlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dlab/io.hpp"
#include "dlab/objectives.hpp"
#include "dlab/projection.hpp"
#include "dlab/smoothness.hpp"

namespace dlab {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.data.seed = cfg.seed;
  cfg.data.class_spread = 0.8;
  cfg.data.noise_sigma = 0.2;
  cfg.data.samples_per_class_train = 75;
  cfg.data.samples_per_class_val = 150;

  cfg.teacher_sgd.learning_rate = 0.015;
  cfg.teacher_sgd.momentum = 0.9;
  cfg.teacher_sgd.epochs = 40;
  cfg.teacher_sgd.batch_size = 16;
  cfg.teacher_sgd.lr_decay_epochs = {30};
  cfg.teacher_sgd.lr_decay_factor = 0.1;

  cfg.student_sgd.learning_rate = 0.02;
  cfg.student_sgd.momentum = 0.9;
  cfg.student_sgd.epochs = 45;
  cfg.student_sgd.batch_size = 16;
  cfg.student_sgd.lr_decay_epochs = {34};
  cfg.student_sgd.lr_decay_factor = 0.1;
  return cfg;
}

namespace {

[[noreturn]] void config_fail(std::size_t line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) {
    return "";
  }
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& v, std::size_t line) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) {
      config_fail(line, "trailing characters after number '" + v + "'");
    }
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    config_fail(line, "expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, std::size_t line) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    config_fail(line, "expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v, std::size_t line) {
  if (v == "on" || v == "true" || v == "1") {
    return true;
  }
  if (v == "off" || v == "false" || v == "0") {
    return false;
  }
  config_fail(line, "expected on/off, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    out.push_back(trim(item));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& v, std::size_t line) {
  std::vector<double> out;
  for (const std::string& item : split_list(v)) {
    out.push_back(parse_double(item, line));
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& v,
                                         std::size_t line) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(v)) {
    out.push_back(static_cast<std::size_t>(parse_u64(item, line)));
  }
  return out;
}

bool sgd_key(SgdConfig& sgd, const std::string& key, const std::string& value,
             std::size_t line) {
  if (key == "learning_rate") {
    sgd.learning_rate = parse_double(value, line);
  } else if (key == "momentum") {
    sgd.momentum = parse_double(value, line);
  } else if (key == "epochs") {
    sgd.epochs = static_cast<std::size_t>(parse_u64(value, line));
  } else if (key == "batch_size") {
    sgd.batch_size = static_cast<std::size_t>(parse_u64(value, line));
  } else if (key == "lr_decay_epochs") {
    sgd.lr_decay_epochs = parse_size_list(value, line);
  } else if (key == "lr_decay_factor") {
    sgd.lr_decay_factor = parse_double(value, line);
  } else {
    return false;
  }
  return true;
}

}  // namespace

ExperimentConfig parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  ExperimentConfig cfg = default_config();
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') {
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') {
        config_fail(line_no, "unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      config_fail(line_no, "expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      config_fail(line_no, "empty key");
    }

    if (section == "run") {
      if (key == "seed") {
        cfg.seed = parse_u64(value, line_no);
      } else if (key == "jobs") {
        cfg.jobs = static_cast<std::size_t>(parse_u64(value, line_no));
      } else if (key == "output") {
        cfg.output_dir = value;
      } else {
        config_fail(line_no, "unknown key '" + key + "' in [run]");
      }
    } else if (section == "data") {
      if (key == "num_groups") {
        cfg.data.num_groups = static_cast<std::size_t>(parse_u64(value, line_no));
      } else if (key == "classes_per_group") {
        cfg.data.classes_per_group =
            static_cast<std::size_t>(parse_u64(value, line_no));
      } else if (key == "input_dim") {
        cfg.data.input_dim = static_cast<std::size_t>(parse_u64(value, line_no));
      } else if (key == "group_spread") {
        cfg.data.group_spread = parse_double(value, line_no);
      } else if (key == "class_spread") {
        cfg.data.class_spread = parse_double(value, line_no);
      } else if (key == "noise_sigma") {
        cfg.data.noise_sigma = parse_double(value, line_no);
      } else if (key == "samples_per_class_train") {
        cfg.data.samples_per_class_train =
            static_cast<std::size_t>(parse_u64(value, line_no));
      } else if (key == "samples_per_class_val") {
        cfg.data.samples_per_class_val =
            static_cast<std::size_t>(parse_u64(value, line_no));
      } else if (key == "seed") {
        cfg.data.seed = parse_u64(value, line_no);
        cfg.data_seed_explicit = true;
      } else if (key == "train_path") {
        cfg.train_path = value;
      } else if (key == "val_path") {
        cfg.val_path = value;
      } else {
        config_fail(line_no, "unknown key '" + key + "' in [data]");
      }
    } else if (section == "teacher") {
      if (key == "hidden") {
        cfg.teacher_hidden = parse_size_list(value, line_no);
      } else if (!sgd_key(cfg.teacher_sgd, key, value, line_no)) {
        config_fail(line_no, "unknown key '" + key + "' in [teacher]");
      }
    } else if (section == "student") {
      if (key == "hidden") {
        cfg.student_hidden = parse_size_list(value, line_no);
      } else if (!sgd_key(cfg.student_sgd, key, value, line_no)) {
        config_fail(line_no, "unknown key '" + key + "' in [student]");
      }
    } else if (section == "grid") {
      if (key == "alpha") {
        cfg.alpha_grid = parse_double_list(value, line_no);
      } else if (key == "temperature") {
        cfg.temperature_grid = parse_double_list(value, line_no);
      } else if (key == "beta") {
        cfg.beta = parse_double(value, line_no);
      } else {
        config_fail(line_no, "unknown key '" + key + "' in [grid]");
      }
    } else if (section == "analysis") {
      if (key == "eta") {
        cfg.analyze_eta = parse_bool(value, line_no);
      } else if (key == "projection") {
        cfg.analyze_projection = parse_bool(value, line_no);
      } else if (key == "smoothness") {
        cfg.analyze_smoothness = parse_bool(value, line_no);
      } else if (key == "class_accuracy") {
        cfg.analyze_class_accuracy = parse_bool(value, line_no);
      } else if (key == "dominance") {
        cfg.analyze_dominance = parse_bool(value, line_no);
      } else if (key == "eta_reference_temperature") {
        cfg.eta_reference_temperature = parse_double(value, line_no);
      } else if (key == "sets") {
        if (value == "ground-truth") {
          cfg.set_source = SetSource::GroundTruth;
        } else if (value == "file") {
          cfg.set_source = SetSource::File;
        } else if (value == "centroid") {
          cfg.set_source = SetSource::Centroid;
        } else {
          config_fail(line_no,
                      "sets must be ground-truth, file, or centroid");
        }
      } else if (key == "sets_file") {
        cfg.sets_file = value;
      } else if (key == "similar_frac") {
        cfg.similar_frac = parse_double(value, line_no);
      } else if (key == "dissimilar_frac") {
        cfg.dissimilar_frac = parse_double(value, line_no);
      } else if (key == "projection_classes") {
        const auto items = parse_double_list(value, line_no);
        if (items.size() != 3) {
          config_fail(line_no, "projection_classes needs exactly 3 entries");
        }
        for (std::size_t i = 0; i < 3; ++i) {
          cfg.projection_classes[i] = static_cast<int>(items[i]);
        }
      } else if (key == "dominance_factor") {
        cfg.dominance_factor = parse_double(value, line_no);
      } else if (key == "smoothness_temperatures") {
        cfg.smoothness_temperatures = parse_double_list(value, line_no);
      } else {
        config_fail(line_no, "unknown key '" + key + "' in [analysis]");
      }
    } else if (section.empty()) {
      config_fail(line_no, "key '" + key + "' appears before any [section]");
    } else {
      config_fail(line_no, "unknown section [" + section + "]");
    }
  }
  if (!cfg.data_seed_explicit) {
    cfg.data.seed = cfg.seed;
  }
  return cfg;
}

namespace {

bool has_value(const std::vector<double>& grid, double v) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

bool has_duplicates(std::vector<double> grid) {
  std::sort(grid.begin(), grid.end());
  return std::adjacent_find(grid.begin(), grid.end()) != grid.end();
}

void validate_sgd(const SgdConfig& sgd, const char* who) {
  if (!(sgd.learning_rate > 0.0)) {
    throw ConfigError(std::string(who) + ": learning_rate must be positive");
  }
  if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) {
    throw ConfigError(std::string(who) + ": momentum must lie in [0, 1)");
  }
  if (sgd.batch_size < 1) {
    throw ConfigError(std::string(who) + ": batch_size must be positive");
  }
  if (!(sgd.lr_decay_factor > 0.0)) {
    throw ConfigError(std::string(who) + ": lr_decay_factor must be positive");
  }
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) {
    throw ConfigError("output directory must not be empty");
  }
  if (cfg.jobs < 1) {
    throw ConfigError("jobs must be at least 1");
  }
  if (cfg.train_path.empty() != cfg.val_path.empty()) {
    throw ConfigError("train_path and val_path must be given together");
  }
  if (cfg.train_path.empty()) {
    if (cfg.data.num_classes() < 2) {
      throw ConfigError("the generator spec must produce at least 2 classes");
    }
    if (!(cfg.data.class_spread < cfg.data.group_spread)) {
      throw ConfigError("class_spread must be smaller than group_spread");
    }
    if (cfg.data.noise_sigma < 0.0) {
      throw ConfigError("noise_sigma must be nonnegative");
    }
  }
  if (cfg.alpha_grid.empty()) {
    throw ConfigError("alpha grid must not be empty");
  }
  for (double a : cfg.alpha_grid) {
    if (!(a >= 0.0 && a < 1.0)) {
      throw ConfigError("alpha values must lie in [0, 1)");
    }
  }
  if (has_duplicates(cfg.alpha_grid)) {
    throw ConfigError("alpha grid contains duplicates");
  }
  if (cfg.temperature_grid.empty()) {
    throw ConfigError("temperature grid must not be empty");
  }
  for (double t : cfg.temperature_grid) {
    if (!(t > 0.0)) {
      throw ConfigError("temperatures must be positive");
    }
  }
  if (has_duplicates(cfg.temperature_grid)) {
    throw ConfigError("temperature grid contains duplicates");
  }
  if (!has_value(cfg.temperature_grid, 1.0)) {
    throw ConfigError("temperature grid must contain 1 (the low-temperature "
                      "reference every comparison anchors to)");
  }
  if (!has_value(cfg.temperature_grid, cfg.eta_reference_temperature)) {
    throw ConfigError("eta_reference_temperature must be one of the grid "
                      "temperatures");
  }
  if (!(cfg.beta >= 0.0 && cfg.beta <= 1.0)) {
    throw ConfigError("beta must lie in [0, 1]");
  }
  for (std::size_t w : cfg.teacher_hidden) {
    if (w < 1) {
      throw ConfigError("teacher hidden widths must be positive");
    }
  }
  for (std::size_t w : cfg.student_hidden) {
    if (w < 1) {
      throw ConfigError("student hidden widths must be positive");
    }
  }
  validate_sgd(cfg.teacher_sgd, "teacher");
  validate_sgd(cfg.student_sgd, "student");
  if (cfg.set_source == SetSource::File && cfg.sets_file.empty()) {
    throw ConfigError("sets = file requires sets_file");
  }
  if (cfg.set_source == SetSource::Centroid) {
    if (!(cfg.similar_frac > 0.0 && cfg.similar_frac < 1.0) ||
        !(cfg.dissimilar_frac > 0.0 && cfg.dissimilar_frac < 1.0)) {
      throw ConfigError("semantic set fractions must lie in (0, 1)");
    }
  }
  const auto& pc = cfg.projection_classes;
  if (pc[0] == pc[1] || pc[0] == pc[2] || pc[1] == pc[2]) {
    throw ConfigError("projection_classes must be three distinct classes");
  }
  for (int c : pc) {
    if (c < 0) {
      throw ConfigError("projection_classes must be nonnegative");
    }
    if (cfg.train_path.empty() &&
        static_cast<std::size_t>(c) >= cfg.data.num_classes()) {
      throw ConfigError("projection class " + std::to_string(c) +
                        " out of range for the generator spec");
    }
  }
  if (!(cfg.dominance_factor >= 1.0)) {
    throw ConfigError("dominance_factor must be at least 1");
  }
  if (cfg.analyze_smoothness) {
    if (cfg.smoothness_temperatures.empty()) {
      throw ConfigError("smoothness_temperatures must not be empty");
    }
    for (double t : cfg.smoothness_temperatures) {
      if (!(t > 0.0)) {
        throw ConfigError("smoothness temperatures must be positive");
      }
    }
  }
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream s;
  s << cfg.seed << '|' << cfg.data.num_groups << '|'
    << cfg.data.classes_per_group << '|' << cfg.data.input_dim << '|'
    << io::format_double(cfg.data.group_spread) << '|'
    << io::format_double(cfg.data.class_spread) << '|'
    << io::format_double(cfg.data.noise_sigma) << '|'
    << cfg.data.samples_per_class_train << '|'
    << cfg.data.samples_per_class_val << '|' << cfg.data.seed << '|'
    << cfg.train_path << '|' << cfg.val_path << '|';
  for (std::size_t w : cfg.teacher_hidden) {
    s << w << ',';
  }
  s << '|';
  for (std::size_t w : cfg.student_hidden) {
    s << w << ',';
  }
  s << '|';
  auto sgd = [&s](const SgdConfig& c) {
    s << io::format_double(c.learning_rate) << ','
      << io::format_double(c.momentum) << ',' << c.epochs << ','
      << c.batch_size << ',';
    for (std::size_t e : c.lr_decay_epochs) {
      s << e << ';';
    }
    s << io::format_double(c.lr_decay_factor) << '|';
  };
  sgd(cfg.teacher_sgd);
  sgd(cfg.student_sgd);
  for (double a : cfg.alpha_grid) {
    s << io::format_double(a) << ',';
  }
  s << '|';
  for (double t : cfg.temperature_grid) {
    s << io::format_double(t) << ',';
  }
  s << '|' << io::format_double(cfg.beta) << '|' << cfg.analyze_eta
    << cfg.analyze_projection << cfg.analyze_smoothness
    << cfg.analyze_class_accuracy << cfg.analyze_dominance << '|'
    << io::format_double(cfg.eta_reference_temperature) << '|'
    << static_cast<int>(cfg.set_source) << '|' << cfg.sets_file << '|'
    << io::format_double(cfg.similar_frac) << '|'
    << io::format_double(cfg.dissimilar_frac) << '|'
    << cfg.projection_classes[0] << ',' << cfg.projection_classes[1] << ','
    << cfg.projection_classes[2] << '|'
    << io::format_double(cfg.dominance_factor) << '|';
  for (double t : cfg.smoothness_temperatures) {
    s << io::format_double(t) << ',';
  }
  const std::string text = s.str();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Feature dumps

namespace {

constexpr char kFeatMagic[4] = {'F', 'E', 'A', 'T'};
constexpr std::uint16_t kFeatVersion = 1;

}  // namespace

FeatureMatrix extract_features(const NetworkParams& net,
                               const LabeledDataset& data,
                               double temperature_tag, Split split) {
  if (!(temperature_tag > 0.0)) {
    throw DomainError("extract_features: temperature tag must be positive");
  }
  FeatureMatrix out;
  out.num_classes = data.num_classes;
  out.split = split;
  out.temperature_tag = temperature_tag;
  out.labels = data.labels;
  out.rows = Matrix(data.size(), net.penultimate_dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ForwardTrace trace = forward(net, data.inputs.row(i));
    const auto rep = trace.penultimate();
    for (std::size_t d = 0; d < rep.size(); ++d) {
      out.rows(i, d) = rep[d];
    }
  }
  return out;
}

void dump_features(const FeatureMatrix& features, const fs::path& path) {
  if (features.rows.rows() != features.labels.size()) {
    throw ShapeError("dump_features: rows and labels disagree");
  }
  std::ofstream out = io::open_output(path, /*binary=*/true);
  out.write(kFeatMagic, 4);
  io::write_u16(out, kFeatVersion);
  io::write_u64(out, static_cast<std::uint64_t>(features.rows.rows()));
  io::write_u32(out, static_cast<std::uint32_t>(features.rows.cols()));
  io::write_u32(out, static_cast<std::uint32_t>(features.num_classes));
  io::write_f64(out, features.temperature_tag);
  io::write_u8(out, features.split == Split::Train ? 0 : 1);
  for (std::size_t r = 0; r < features.rows.rows(); ++r) {
    for (double v : features.rows.row(r)) {
      io::write_f64(out, v);
    }
  }
  for (int label : features.labels) {
    io::write_u32(out, static_cast<std::uint32_t>(label));
  }
  if (!out) {
    throw IoError("dump_features: write failed for " + path.string());
  }
}

void dump_features(const NetworkParams& net, const LabeledDataset& data,
                   double temperature_tag, Split split, const fs::path& path) {
  dump_features(extract_features(net, data, temperature_tag, split), path);
}

FeatureMatrix load_features(const fs::path& path) {
  io::Reader in(path);
  char magic[4];
  in.bytes(magic, 4);
  if (std::string(magic, 4) != std::string(kFeatMagic, 4)) {
    throw ParseError(0, path.string() + ": not a feature dump (bad magic)");
  }
  const std::uint16_t version = in.u16();
  if (version != kFeatVersion) {
    in.fail("unsupported feature dump version " + std::to_string(version));
  }
  FeatureMatrix out;
  const std::size_t n = in.u64();
  const std::size_t h = in.u32();
  out.num_classes = static_cast<int>(in.u32());
  out.temperature_tag = in.f64();
  const std::uint8_t split = in.u8();
  if (split > 1) {
    in.fail("bad split tag");
  }
  out.split = split == 0 ? Split::Train : Split::Val;
  if (h < 1 || out.num_classes < 1) {
    in.fail("degenerate feature dump header");
  }
  if (!(out.temperature_tag > 0.0)) {
    in.fail("temperature tag must be positive");
  }
  out.rows = Matrix(n, h);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < h; ++c) {
      out.rows(r, c) = in.f64();
    }
  }
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = static_cast<int>(in.u32());
    if (out.labels[i] < 0 || out.labels[i] >= out.num_classes) {
      throw DomainError(path.string() + ": label out of range");
    }
  }
  if (!in.at_end()) {
    in.fail("trailing data after feature payload");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifact layout

std::string grid_tag(double value) { return io::format_double(value); }

fs::path dataset_path(const ExperimentConfig& cfg, Split split) {
  return fs::path(cfg.output_dir) / "data" /
         (std::string(split_name(split)) + ".dset");
}

fs::path teacher_checkpoint_path(const ExperimentConfig& cfg, double alpha) {
  return fs::path(cfg.output_dir) / "teachers" /
         ("alpha_" + grid_tag(alpha) + ".dlab");
}

fs::path teacher_features_path(const ExperimentConfig& cfg, double alpha,
                               Split split) {
  return fs::path(cfg.output_dir) / "teachers" /
         ("alpha_" + grid_tag(alpha) + "_" + split_name(split) + ".feat");
}

fs::path cell_dir(const ExperimentConfig& cfg, double alpha,
                  double temperature) {
  return fs::path(cfg.output_dir) / "cells" /
         ("alpha_" + grid_tag(alpha) + "_T_" + grid_tag(temperature));
}

fs::path student_checkpoint_path(const ExperimentConfig& cfg, double alpha,
                                 double temperature) {
  return cell_dir(cfg, alpha, temperature) / "student.dlab";
}

fs::path student_features_path(const ExperimentConfig& cfg, double alpha,
                               double temperature, Split split) {
  return cell_dir(cfg, alpha, temperature) /
         (std::string(split_name(split)) + ".feat");
}

// ---------------------------------------------------------------------------
// Shared phase helpers

namespace {

struct Datasets {
  LabeledDataset train;
  LabeledDataset val;
};

Datasets load_datasets(const ExperimentConfig& cfg) {
  Datasets d;
  d.train = load_dataset(dataset_path(cfg, Split::Train));
  d.val = load_dataset(dataset_path(cfg, Split::Val));
  if (d.train.num_classes != d.val.num_classes ||
      d.train.inputs.cols() != d.val.inputs.cols()) {
    throw DomainError("train and val datasets disagree on classes or width");
  }
  return d;
}

std::vector<std::size_t> network_dims(std::size_t input_dim,
                                      const std::vector<std::size_t>& hidden,
                                      std::size_t num_classes) {
  std::vector<std::size_t> dims;
  dims.reserve(hidden.size() + 2);
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(num_classes);
  return dims;
}

double micro_accuracy(const ClassAccuracy& acc) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t c = 0; c < acc.total.size(); ++c) {
    correct += acc.correct[c];
    total += acc.total[c];
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) /
                                static_cast<double>(total);
}

void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
  jobs = std::min(std::max<std::size_t>(jobs, 1), n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) {
          return;
        }
        fn(i);
      }
    });
  }
  for (std::thread& t : pool) {
    t.join();
  }
}

ordered_json read_run_record(const ExperimentConfig& cfg) {
  const fs::path path = fs::path(cfg.output_dir) / "run_record.json";
  std::ifstream in(path);
  if (!in) {
    ordered_json record;
    record["config_hash"] = config_hash(cfg);
    record["seed"] = cfg.seed;
    return record;
  }
  ordered_json record = ordered_json::parse(in, nullptr, true);
  record["config_hash"] = config_hash(cfg);
  record["seed"] = cfg.seed;
  return record;
}

void write_run_record(const ExperimentConfig& cfg, const ordered_json& record) {
  std::ofstream out =
      io::open_output(fs::path(cfg.output_dir) / "run_record.json",
                      /*binary=*/false);
  out << record.dump(2) << '\n';
  if (!out) {
    throw IoError("run record write failed");
  }
}

std::string relative_to_output(const ExperimentConfig& cfg,
                               const fs::path& path) {
  return fs::relative(path, fs::path(cfg.output_dir)).generic_string();
}

// Plain comma-separated tables; none of our fields ever contain commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string() + " for reading");
  }
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream row(line);
    while (std::getline(row, field, ',')) {
      fields.push_back(field);
    }
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  return table;
}

std::size_t column_index(const CsvTable& table, const std::string& name) {
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i] == name) {
      return i;
    }
  }
  throw ParseError(0, "csv is missing column '" + name + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Phases

int cmd_gen_data(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const fs::path dir = fs::path(cfg.output_dir) / "data";
  fs::create_directories(dir);
  LabeledDataset train;
  LabeledDataset val;
  if (!cfg.train_path.empty()) {
    train = load_dataset(cfg.train_path);
    val = load_dataset(cfg.val_path);
    if (train.num_classes != val.num_classes ||
        train.inputs.cols() != val.inputs.cols()) {
      throw DomainError("supplied train and val datasets do not match");
    }
  } else {
    GeneratedData generated = generate(cfg.data);
    train = std::move(generated.train);
    val = std::move(generated.val);
  }
  save_dataset(train, dataset_path(cfg, Split::Train));
  save_dataset(val, dataset_path(cfg, Split::Val));
  return 0;
}

namespace {

struct TeacherResult {
  double alpha = 0.0;
  std::string status = "ok";
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double final_loss = 0.0;
};

}  // namespace

int cmd_train_teacher(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const Datasets data = load_datasets(cfg);
  const int k = data.train.num_classes;
  fs::create_directories(fs::path(cfg.output_dir) / "teachers");

  std::vector<TeacherResult> results(cfg.alpha_grid.size());
  parallel_for(cfg.alpha_grid.size(), cfg.jobs, [&](std::size_t a) {
    TeacherResult& result = results[a];
    result.alpha = cfg.alpha_grid[a];
    try {
      const SmoothingConfig smoothing{result.alpha, k};
      std::vector<SoftDistribution> targets;
      targets.reserve(static_cast<std::size_t>(k));
      for (int c = 0; c < k; ++c) {
        targets.push_back(smoothed_targets(c, smoothing));
      }
      NetworkParams net = init_network(
          network_dims(data.train.inputs.cols(), cfg.teacher_hidden,
                       static_cast<std::size_t>(k)),
          cfg.seed);
      SgdConfig sgd = cfg.teacher_sgd;
      sgd.seed = cfg.seed;
      const auto& labels = data.train.labels;
      const LossFn loss = [&targets, &labels](std::size_t i,
                                              std::span<const double> logits,
                                              std::span<double> grad) {
        const SoftDistribution& target =
            targets[static_cast<std::size_t>(labels[i])];
        const SoftDistribution p = tempered_softmax(logits, 1.0);
        for (std::size_t c = 0; c < grad.size(); ++c) {
          grad[c] = p.probs[c] - target.probs[c];
        }
        return cross_entropy(target, p);
      };
      const std::vector<double> history = train(net, data.train, loss, sgd);
      result.final_loss = history.empty() ? 0.0 : history.back();
      save_checkpoint(net, teacher_checkpoint_path(cfg, result.alpha));
      dump_features(net, data.train, 1.0, Split::Train,
                    teacher_features_path(cfg, result.alpha, Split::Train));
      dump_features(net, data.val, 1.0, Split::Val,
                    teacher_features_path(cfg, result.alpha, Split::Val));
      result.train_accuracy = micro_accuracy(class_accuracy(net, data.train));
      result.val_accuracy = micro_accuracy(class_accuracy(net, data.val));
    } catch (const Error& e) {
      result.status = std::string("error: ") + e.what();
    }
  });

  std::ofstream csv = io::open_output(
      fs::path(cfg.output_dir) / "teachers" / "teachers.csv", false);
  csv << "alpha,train_accuracy,val_accuracy,final_loss\n";
  int failures = 0;
  for (const TeacherResult& r : results) {
    if (r.status != "ok") {
      ++failures;
      continue;
    }
    csv << io::format_double(r.alpha) << ',' << io::format_double(r.train_accuracy)
        << ',' << io::format_double(r.val_accuracy) << ','
        << io::format_double(r.final_loss) << '\n';
  }
  csv.close();

  ordered_json record = read_run_record(cfg);
  ordered_json teachers = ordered_json::array();
  for (const TeacherResult& r : results) {
    ordered_json t;
    t["alpha"] = r.alpha;
    t["status"] = r.status;
    if (r.status == "ok") {
      t["checkpoint"] =
          relative_to_output(cfg, teacher_checkpoint_path(cfg, r.alpha));
      t["train_features"] = relative_to_output(
          cfg, teacher_features_path(cfg, r.alpha, Split::Train));
      t["val_features"] = relative_to_output(
          cfg, teacher_features_path(cfg, r.alpha, Split::Val));
      t["train_accuracy"] = r.train_accuracy;
      t["val_accuracy"] = r.val_accuracy;
      t["final_loss"] = r.final_loss;
    }
    teachers.push_back(std::move(t));
  }
  record["teachers"] = std::move(teachers);
  write_run_record(cfg, record);
  return failures;
}

namespace {

struct CellResult {
  double alpha = 0.0;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double final_loss = 0.0;
};

}  // namespace

int cmd_distill(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const Datasets data = load_datasets(cfg);
  const int k = data.train.num_classes;
  const std::size_t n_cells =
      cfg.alpha_grid.size() * cfg.temperature_grid.size();
  std::vector<CellResult> results(n_cells);

  parallel_for(n_cells, cfg.jobs, [&](std::size_t cell) {
    CellResult& result = results[cell];
    const std::size_t a = cell / cfg.temperature_grid.size();
    const std::size_t t = cell % cfg.temperature_grid.size();
    result.alpha = cfg.alpha_grid[a];
    result.temperature = cfg.temperature_grid[t];
    result.seed = cfg.seed + cell;
    try {
      const NetworkParams teacher =
          load_checkpoint(teacher_checkpoint_path(cfg, result.alpha));
      if (teacher.input_dim != data.train.inputs.cols() ||
          teacher.num_classes != static_cast<std::size_t>(k)) {
        throw ShapeError("teacher checkpoint does not match the dataset");
      }
      const double temp = result.temperature;
      Matrix teacher_probs(data.train.size(), static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < data.train.size(); ++i) {
        const ForwardTrace trace = forward(teacher, data.train.inputs.row(i));
        const SoftDistribution p = tempered_softmax(trace.logits(), temp);
        for (int c = 0; c < k; ++c) {
          teacher_probs(i, static_cast<std::size_t>(c)) =
              p.probs[static_cast<std::size_t>(c)];
        }
      }
      NetworkParams student = init_network(
          network_dims(data.train.inputs.cols(), cfg.student_hidden,
                       static_cast<std::size_t>(k)),
          result.seed);
      SgdConfig sgd = cfg.student_sgd;
      sgd.seed = result.seed;
      const DistillConfig distill{temp, cfg.beta};
      const auto& labels = data.train.labels;
      const LossFn loss = [&](std::size_t i, std::span<const double> logits,
                              std::span<double> grad) {
        SoftDistribution soft;
        soft.temperature = temp;
        const auto row = teacher_probs.row(i);
        soft.probs.assign(row.begin(), row.end());
        const std::vector<double> g =
            distill_loss_grad(logits, soft, labels[i], distill);
        std::copy(g.begin(), g.end(), grad.begin());
        return distill_loss(logits, soft, labels[i], distill);
      };
      const std::vector<double> history = train(student, data.train, loss, sgd);
      result.final_loss = history.empty() ? 0.0 : history.back();
      fs::create_directories(cell_dir(cfg, result.alpha, temp));
      save_checkpoint(student,
                      student_checkpoint_path(cfg, result.alpha, temp));
      dump_features(student, data.train, temp, Split::Train,
                    student_features_path(cfg, result.alpha, temp,
                                          Split::Train));
      dump_features(student, data.val, temp, Split::Val,
                    student_features_path(cfg, result.alpha, temp, Split::Val));
      result.train_accuracy =
          micro_accuracy(class_accuracy(student, data.train));
      result.val_accuracy = micro_accuracy(class_accuracy(student, data.val));
    } catch (const Error& e) {
      result.status = std::string("error: ") + e.what();
    }
  });

  std::ofstream csv =
      io::open_output(fs::path(cfg.output_dir) / "students.csv", false);
  csv << "alpha,temperature,seed,train_accuracy,val_accuracy,final_loss\n";
  int failures = 0;
  for (const CellResult& r : results) {
    if (r.status != "ok") {
      ++failures;
      continue;
    }
    csv << io::format_double(r.alpha) << ',' << io::format_double(r.temperature)
        << ',' << r.seed << ',' << io::format_double(r.train_accuracy) << ','
        << io::format_double(r.val_accuracy) << ','
        << io::format_double(r.final_loss) << '\n';
  }
  csv.close();

  ordered_json record = read_run_record(cfg);
  record["beta"] = cfg.beta;
  ordered_json cells = ordered_json::array();
  for (const CellResult& r : results) {
    ordered_json c;
    c["alpha"] = r.alpha;
    c["temperature"] = r.temperature;
    c["seed"] = r.seed;
    c["status"] = r.status;
    if (r.status == "ok") {
      c["checkpoint"] = relative_to_output(
          cfg, student_checkpoint_path(cfg, r.alpha, r.temperature));
      c["train_features"] = relative_to_output(
          cfg,
          student_features_path(cfg, r.alpha, r.temperature, Split::Train));
      c["val_features"] = relative_to_output(
          cfg, student_features_path(cfg, r.alpha, r.temperature, Split::Val));
      c["train_accuracy"] = r.train_accuracy;
      c["val_accuracy"] = r.val_accuracy;
      c["final_loss"] = r.final_loss;
    }
    cells.push_back(std::move(c));
  }
  record["cells"] = std::move(cells);
  write_run_record(cfg, record);
  return failures;
}

// The analyze phase reads only stored artifacts (checkpoints, feature dumps,
// datasets); every CSV it writes can be regenerated from those files alone.
int cmd_analyze(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const Datasets data = load_datasets(cfg);
  const int k = data.train.num_classes;
  const fs::path dir = fs::path(cfg.output_dir) / "analysis";
  fs::create_directories(dir);
  int failures = 0;
  int warnings = 0;
  std::vector<std::string> artifacts;

  const double t_ref = cfg.eta_reference_temperature;

  // Diffusion of semantic sets between the reference temperature and every
  // other grid temperature, per target class, both variants, both splits.
  if (cfg.analyze_eta) {
    for (double alpha : cfg.alpha_grid) {
      DiffusionReport report;
      std::vector<SemanticSets> set_list;
      try {
        if (cfg.set_source == SetSource::GroundTruth) {
          for (int target = 0; target < k; ++target) {
            set_list.push_back(ground_truth_sets(data.train, target));
          }
        } else if (cfg.set_source == SetSource::File) {
          set_list = parse_semantic_sets_file(cfg.sets_file, k);
        } else {
          const FeatureMatrix teacher_train =
              load_features(teacher_features_path(cfg, alpha, Split::Train));
          const ClassCentroids cents = centroids(teacher_train, k);
          for (int target = 0; target < k; ++target) {
            try {
              set_list.push_back(select_semantic_sets(
                  cents, target, cfg.similar_frac, cfg.dissimilar_frac));
            } catch (const Error&) {
              ++warnings;
            }
          }
        }
      } catch (const Error& e) {
        std::fprintf(stderr, "analyze: semantic sets for alpha %s: %s\n",
                     grid_tag(alpha).c_str(), e.what());
        ++failures;
        continue;
      }
      try {
        for (Split split : {Split::Train, Split::Val}) {
          const FeatureMatrix at_ref =
              load_features(student_features_path(cfg, alpha, t_ref, split));
          for (double t2 : cfg.temperature_grid) {
            if (t2 == t_ref) {
              continue;
            }
            const FeatureMatrix at_t2 =
                load_features(student_features_path(cfg, alpha, t2, split));
            for (const SemanticSets& sets : set_list) {
              for (EtaVariant variant :
                   {EtaVariant::Centroid, EtaVariant::Pairwise}) {
                DiffusionEntry entry;
                entry.target = sets.target;
                entry.split = split;
                entry.variant = variant;
                entry.t1 = t_ref;
                entry.t2 = t2;
                try {
                  if (variant == EtaVariant::Centroid) {
                    entry.eta_similar = diffusion_index(at_ref, at_t2, sets,
                                                        SetSide::Similar);
                    entry.eta_dissimilar = diffusion_index(
                        at_ref, at_t2, sets, SetSide::Dissimilar);
                  } else {
                    entry.eta_similar = diffusion_index_pairwise(
                        at_ref, at_t2, sets, SetSide::Similar);
                    entry.eta_dissimilar = diffusion_index_pairwise(
                        at_ref, at_t2, sets, SetSide::Dissimilar);
                  }
                } catch (const GeometryError&) {
                  entry.eta_similar = std::nan("");
                  entry.eta_dissimilar = std::nan("");
                  ++warnings;
                }
                report.push_back(entry);
              }
            }
          }
        }
        const fs::path out = dir / ("eta_alpha_" + grid_tag(alpha) + ".csv");
        write_eta_csv(report, out);
        artifacts.push_back(relative_to_output(cfg, out));
      } catch (const Error& e) {
        std::fprintf(stderr, "analyze: diffusion table for alpha %s: %s\n",
                     grid_tag(alpha).c_str(), e.what());
        ++failures;
      }

      // Stability of the data-driven selection across temperatures.
      if (cfg.set_source == SetSource::Centroid) {
        try {
          std::ofstream conscsv = io::open_output(
              dir / ("set_consistency_alpha_" + grid_tag(alpha) + ".csv"),
              false);
          conscsv << "target,T1,T2,consistency_S1,consistency_S2\n";
          const FeatureMatrix at_ref = load_features(
              student_features_path(cfg, alpha, t_ref, Split::Train));
          const ClassCentroids cents_ref = centroids(at_ref, k);
          for (double t2 : cfg.temperature_grid) {
            if (t2 == t_ref) {
              continue;
            }
            const FeatureMatrix at_t2 = load_features(
                student_features_path(cfg, alpha, t2, Split::Train));
            const ClassCentroids cents_t2 = centroids(at_t2, k);
            for (int target = 0; target < k; ++target) {
              try {
                const SemanticSets sa = select_semantic_sets(
                    cents_ref, target, cfg.similar_frac, cfg.dissimilar_frac);
                const SemanticSets sb = select_semantic_sets(
                    cents_t2, target, cfg.similar_frac, cfg.dissimilar_frac);
                const auto [c1, c2] = set_consistency(sa, sb);
                conscsv << target << ',' << io::format_double(t_ref) << ','
                        << io::format_double(t2) << ','
                        << io::format_double(c1) << ','
                        << io::format_double(c2) << '\n';
              } catch (const Error&) {
                ++warnings;
              }
            }
          }
          artifacts.push_back(relative_to_output(
              cfg,
              dir / ("set_consistency_alpha_" + grid_tag(alpha) + ".csv")));
        } catch (const Error& e) {
          std::fprintf(stderr, "analyze: set consistency for alpha %s: %s\n",
                       grid_tag(alpha).c_str(), e.what());
          ++failures;
        }
      }
    }

    // Within-class scatter of the teacher representations.
    try {
      std::ofstream tcsv = io::open_output(dir / "tightness.csv", false);
      tcsv << "alpha,split,class_index,mean_sq_dist\n";
      for (double alpha : cfg.alpha_grid) {
        for (Split split : {Split::Train, Split::Val}) {
          const FeatureMatrix feats =
              load_features(teacher_features_path(cfg, alpha, split));
          const std::vector<double> tight = cluster_tightness(feats);
          for (std::size_t c = 0; c < tight.size(); ++c) {
            tcsv << io::format_double(alpha) << ',' << split_name(split) << ','
                 << c << ',' << io::format_double(tight[c]) << '\n';
          }
        }
      }
      artifacts.push_back(relative_to_output(cfg, dir / "tightness.csv"));
    } catch (const Error& e) {
      std::fprintf(stderr, "analyze: tightness table: %s\n", e.what());
      ++failures;
    }
  }

  // Average entropy of the teachers' tempered outputs.
  if (cfg.analyze_smoothness) {
    try {
      SmoothnessReport train_rows;
      SmoothnessReport val_rows;
      for (double alpha : cfg.alpha_grid) {
        const NetworkParams teacher =
            load_checkpoint(teacher_checkpoint_path(cfg, alpha));
        for (double t : cfg.smoothness_temperatures) {
          train_rows.push_back(
              {t, alpha, average_entropy(teacher, data.train, t)});
          val_rows.push_back({t, alpha, average_entropy(teacher, data.val, t)});
        }
      }
      write_smoothness_csv(train_rows, dir / "smoothness.csv");
      write_smoothness_csv(val_rows, dir / "smoothness_val.csv");
      artifacts.push_back(relative_to_output(cfg, dir / "smoothness.csv"));
      artifacts.push_back(relative_to_output(cfg, dir / "smoothness_val.csv"));
    } catch (const Error& e) {
      std::fprintf(stderr, "analyze: smoothness table: %s\n", e.what());
      ++failures;
    }
  }

  // Mean soft outputs per class of interest and how strongly the top
  // incorrect class dominates the rest, across temperatures.
  if (cfg.analyze_dominance) {
    try {
      const fs::path profile_dir = dir / "profiles";
      fs::create_directories(profile_dir);
      std::ofstream dcsv = io::open_output(dir / "dominance.csv", false);
      dcsv << "alpha,temperature,class_index,p_correct,p_top_incorrect,gap,"
              "dominance_count\n";
      for (double alpha : cfg.alpha_grid) {
        const NetworkParams teacher =
            load_checkpoint(teacher_checkpoint_path(cfg, alpha));
        for (double t : cfg.temperature_grid) {
          for (int cls = 0; cls < k; ++cls) {
            const SoftOutputProfile profile =
                soft_output_profile(teacher, data.train, cls, t);
            const fs::path ppath =
                profile_dir / ("alpha_" + grid_tag(alpha) + "_T_" +
                               grid_tag(t) + "_class_" + std::to_string(cls) +
                               ".csv");
            write_profile_csv(profile, ppath);
            const double p_correct =
                profile.mean_probs[static_cast<std::size_t>(cls)];
            double p_top = 0.0;
            for (int m = 0; m < k; ++m) {
              if (m != cls) {
                p_top = std::max(
                    p_top, profile.mean_probs[static_cast<std::size_t>(m)]);
              }
            }
            dcsv << io::format_double(alpha) << ',' << io::format_double(t)
                 << ',' << cls << ',' << io::format_double(p_correct) << ','
                 << io::format_double(p_top) << ','
                 << io::format_double(p_correct - p_top) << ','
                 << dominance_count(profile, cfg.dominance_factor) << '\n';
          }
        }
      }
      artifacts.push_back(relative_to_output(cfg, dir / "dominance.csv"));
    } catch (const Error& e) {
      std::fprintf(stderr, "analyze: dominance table: %s\n", e.what());
      ++failures;
    }
  }

  // Per-class accuracy of every student cell.
  if (cfg.analyze_class_accuracy) {
    try {
      std::ofstream acsv = io::open_output(dir / "class_accuracy.csv", false);
      acsv << "alpha,temperature,split,class_index,correct,total,accuracy\n";
      for (double alpha : cfg.alpha_grid) {
        for (double t : cfg.temperature_grid) {
          const NetworkParams student =
              load_checkpoint(student_checkpoint_path(cfg, alpha, t));
          for (Split split : {Split::Train, Split::Val}) {
            const LabeledDataset& split_data =
                split == Split::Train ? data.train : data.val;
            const ClassAccuracy acc = class_accuracy(student, split_data);
            for (int c = 0; c < k; ++c) {
              const auto ci = static_cast<std::size_t>(c);
              acsv << io::format_double(alpha) << ',' << io::format_double(t)
                   << ',' << split_name(split) << ',' << c << ','
                   << acc.correct[ci] << ',' << acc.total[ci] << ','
                   << io::format_double(acc.per_class[ci]) << '\n';
            }
            acsv << io::format_double(alpha) << ',' << io::format_double(t)
                 << ',' << split_name(split) << ",-1,0,0,"
                 << io::format_double(acc.macro_mean) << '\n';
          }
        }
      }
      artifacts.push_back(relative_to_output(cfg, dir / "class_accuracy.csv"));
    } catch (const Error& e) {
      std::fprintf(stderr, "analyze: class accuracy table: %s\n", e.what());
      ++failures;
    }
  }

  // Scatter panels: features of the chosen class triple in the span of the
  // student's own templates, reduced to two dimensions.
  if (cfg.analyze_projection) {
    const fs::path proj_dir = dir / "projections";
    fs::create_directories(proj_dir);
    std::vector<std::string> class_names;
    for (int c = 0; c < k; ++c) {
      class_names.push_back("class_" + std::to_string(c));
    }
    for (double alpha : cfg.alpha_grid) {
      for (double t : cfg.temperature_grid) {
        try {
          const NetworkParams student =
              load_checkpoint(student_checkpoint_path(cfg, alpha, t));
          const ProjectionBasis basis =
              qr_basis(student.final_layer(), cfg.projection_classes);
          for (Split split : {Split::Train, Split::Val}) {
            const FeatureMatrix all =
                load_features(student_features_path(cfg, alpha, t, split));
            FeatureMatrix triple;
            triple.num_classes = all.num_classes;
            triple.split = all.split;
            triple.temperature_tag = all.temperature_tag;
            std::vector<std::size_t> keep;
            for (std::size_t i = 0; i < all.labels.size(); ++i) {
              for (int c : cfg.projection_classes) {
                if (all.labels[i] == c) {
                  keep.push_back(i);
                  break;
                }
              }
            }
            triple.rows = Matrix(keep.size(), all.rows.cols());
            triple.labels.resize(keep.size());
            for (std::size_t i = 0; i < keep.size(); ++i) {
              triple.labels[i] = all.labels[keep[i]];
              for (std::size_t d = 0; d < all.rows.cols(); ++d) {
                triple.rows(i, d) = all.rows(keep[i], d);
              }
            }
            const Matrix in_span = project(triple, basis);
            const Projected2D flat = pca_2d(in_span, triple.labels);
            const fs::path out =
                proj_dir / ("alpha_" + grid_tag(alpha) + "_T_" + grid_tag(t) +
                            "_" + split_name(split) + ".svg");
            emit_scatter(flat, class_names, out);
            artifacts.push_back(relative_to_output(cfg, out));
          }
        } catch (const Error& e) {
          std::fprintf(stderr,
                       "analyze: projection panel alpha %s T %s: %s\n",
                       grid_tag(alpha).c_str(), grid_tag(t).c_str(), e.what());
          ++failures;
        }
      }
    }
  }

  ordered_json record = read_run_record(cfg);
  ordered_json analysis;
  analysis["warnings"] = warnings;
  analysis["failures"] = failures;
  ordered_json files = ordered_json::array();
  for (const std::string& a : artifacts) {
    files.push_back(a);
  }
  analysis["files"] = std::move(files);
  record["analysis"] = std::move(analysis);
  write_run_record(cfg, record);
  return failures;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

// Renders the run from its CSV artifacts alone; never recomputes anything
// from checkpoints, so every number in the report can be traced to a stored
// table.
int cmd_report(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const fs::path dir(cfg.output_dir);
  int warnings = 0;
  std::ostringstream out;
  out << "distillation grid report\n";
  out << "config_hash: " << config_hash(cfg) << "\n";
  out << "seed: " << cfg.seed << "\n\n";

  // alpha x temperature matrix of student validation accuracy.
  std::vector<std::vector<std::string>> matrix(
      cfg.temperature_grid.size(),
      std::vector<std::string>(cfg.alpha_grid.size(), "MISSING"));
  std::vector<std::vector<double>> values(
      cfg.temperature_grid.size(),
      std::vector<double>(cfg.alpha_grid.size(),
                          std::numeric_limits<double>::quiet_NaN()));
  try {
    const CsvTable students = read_csv(dir / "students.csv");
    const std::size_t col_alpha = column_index(students, "alpha");
    const std::size_t col_temp = column_index(students, "temperature");
    const std::size_t col_val = column_index(students, "val_accuracy");
    for (const auto& row : students.rows) {
      const double alpha = std::stod(row[col_alpha]);
      const double temp = std::stod(row[col_temp]);
      for (std::size_t a = 0; a < cfg.alpha_grid.size(); ++a) {
        for (std::size_t t = 0; t < cfg.temperature_grid.size(); ++t) {
          if (cfg.alpha_grid[a] == alpha && cfg.temperature_grid[t] == temp) {
            values[t][a] = std::stod(row[col_val]);
            matrix[t][a] = fixed4(values[t][a]);
          }
        }
      }
    }
  } catch (const Error&) {
    ++warnings;
  }
  for (std::size_t a = 0; a < cfg.alpha_grid.size(); ++a) {
    double best = -1.0;
    for (std::size_t t = 0; t < cfg.temperature_grid.size(); ++t) {
      if (!std::isnan(values[t][a])) {
        best = std::max(best, values[t][a]);
      }
    }
    for (std::size_t t = 0; t < cfg.temperature_grid.size(); ++t) {
      if (!std::isnan(values[t][a]) && values[t][a] == best) {
        matrix[t][a] += "*";
      }
    }
  }
  out << "student val accuracy (rows: T, cols: alpha; * = best in column)\n";
  out << "T\\alpha";
  for (double a : cfg.alpha_grid) {
    out << '\t' << grid_tag(a);
  }
  out << '\n';
  for (std::size_t t = 0; t < cfg.temperature_grid.size(); ++t) {
    out << grid_tag(cfg.temperature_grid[t]);
    for (std::size_t a = 0; a < cfg.alpha_grid.size(); ++a) {
      out << '\t' << matrix[t][a];
      if (matrix[t][a] == "MISSING") {
        ++warnings;
      }
    }
    out << '\n';
  }
  out << '\n';

  out << "teacher accuracy\n";
  try {
    const CsvTable teachers = read_csv(dir / "teachers" / "teachers.csv");
    const std::size_t col_alpha = column_index(teachers, "alpha");
    const std::size_t col_train = column_index(teachers, "train_accuracy");
    const std::size_t col_val = column_index(teachers, "val_accuracy");
    for (double a : cfg.alpha_grid) {
      bool found = false;
      for (const auto& row : teachers.rows) {
        if (std::stod(row[col_alpha]) == a) {
          out << "alpha=" << grid_tag(a) << ": train "
              << fixed4(std::stod(row[col_train])) << ", val "
              << fixed4(std::stod(row[col_val])) << '\n';
          found = true;
        }
      }
      if (!found) {
        out << "alpha=" << grid_tag(a) << ": MISSING\n";
        ++warnings;
      }
    }
  } catch (const Error&) {
    out << "MISSING\n";
    ++warnings;
  }
  out << '\n';

  // Sign pattern of the diffusion index (reported both as a fraction and
  // scaled by 100).
  if (cfg.analyze_eta) {
    out << "diffusion of semantic sets (centroid variant, train split, "
           "reference T1="
        << grid_tag(cfg.eta_reference_temperature) << ")\n";
    for (double alpha : cfg.alpha_grid) {
      try {
        const CsvTable eta =
            read_csv(dir / "analysis" / ("eta_alpha_" + grid_tag(alpha) +
                                         ".csv"));
        const std::size_t col_split = column_index(eta, "split");
        const std::size_t col_variant = column_index(eta, "variant");
        const std::size_t col_t2 = column_index(eta, "T2");
        const std::size_t col_s1 = column_index(eta, "eta_S1");
        const std::size_t col_s2 = column_index(eta, "eta_S2");
        for (double t2 : cfg.temperature_grid) {
          if (t2 == cfg.eta_reference_temperature) {
            continue;
          }
          std::size_t total = 0;
          std::size_t expected_sign = 0;
          double sum_s1 = 0.0;
          double sum_s2 = 0.0;
          for (const auto& row : eta.rows) {
            if (row[col_split] != "train" || row[col_variant] != "centroid" ||
                std::stod(row[col_t2]) != t2) {
              continue;
            }
            const double s1 = std::stod(row[col_s1]);
            const double s2 = std::stod(row[col_s2]);
            if (std::isnan(s1) || std::isnan(s2)) {
              ++warnings;
              continue;
            }
            ++total;
            sum_s1 += s1;
            sum_s2 += s2;
            if (s1 < 0.0 && s2 > 0.0) {
              ++expected_sign;
            }
          }
          if (total == 0) {
            out << "alpha=" << grid_tag(alpha) << ", T2=" << grid_tag(t2)
                << ": MISSING\n";
            ++warnings;
            continue;
          }
          const double mean_s1 = sum_s1 / static_cast<double>(total);
          const double mean_s2 = sum_s2 / static_cast<double>(total);
          out << "alpha=" << grid_tag(alpha) << ", T2=" << grid_tag(t2) << ": "
              << expected_sign << "/" << total
              << " targets with eta_S1<0 and eta_S2>0; mean eta_S1 = "
              << fixed4(mean_s1) << " (" << fixed4(mean_s1 * 100.0)
              << " x100), mean eta_S2 = " << fixed4(mean_s2) << " ("
              << fixed4(mean_s2 * 100.0) << " x100)\n";
        }
      } catch (const Error&) {
        out << "alpha=" << grid_tag(alpha) << ": MISSING\n";
        ++warnings;
      }
    }
    out << '\n';
  }

  if (cfg.analyze_smoothness) {
    out << "teacher average entropy (train split)\n";
    try {
      const CsvTable smooth = read_csv(dir / "analysis" / "smoothness.csv");
      const std::size_t col_t = column_index(smooth, "temperature");
      const std::size_t col_a = column_index(smooth, "alpha");
      const std::size_t col_h = column_index(smooth, "average_entropy");
      out << "alpha";
      for (double t : cfg.smoothness_temperatures) {
        out << "\tT=" << grid_tag(t);
      }
      out << '\n';
      for (double alpha : cfg.alpha_grid) {
        out << grid_tag(alpha);
        for (double t : cfg.smoothness_temperatures) {
          bool found = false;
          for (const auto& row : smooth.rows) {
            if (std::stod(row[col_a]) == alpha && std::stod(row[col_t]) == t) {
              out << '\t' << fixed4(std::stod(row[col_h]));
              found = true;
              break;
            }
          }
          if (!found) {
            out << "\tMISSING";
            ++warnings;
          }
        }
        out << '\n';
      }
    } catch (const Error&) {
      out << "MISSING\n";
      ++warnings;
    }
    out << '\n';
  }

  out << "warnings: " << warnings << '\n';

  std::ofstream file = io::open_output(dir / "report.txt", false);
  file << out.str();
  if (!file) {
    throw IoError("report write failed");
  }

  ordered_json record = read_run_record(cfg);
  record["report"] = relative_to_output(cfg, dir / "report.txt");
  write_run_record(cfg, record);
  return 0;
}

}  // namespace dlab
