#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dlab/dataset.hpp"
#include "dlab/geometry.hpp"
#include "dlab/nn.hpp"

namespace dlab {

enum class SetSource { GroundTruth, File, Centroid };

/// One experiment: a dataset, one teacher per alpha, one student per
/// (alpha, temperature) cell, and the analyses over the artifacts.
/// Parsed from a line-oriented "key = value" file with [section] headers.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::string output_dir = "runs/default";

  HierarchySpec data;
  bool data_seed_explicit = false;  // otherwise data.seed follows seed
  std::string train_path;           // when set, load instead of generating
  std::string val_path;

  std::vector<std::size_t> teacher_hidden{32, 16};
  SgdConfig teacher_sgd;
  std::vector<std::size_t> student_hidden{16};
  SgdConfig student_sgd;

  std::vector<double> alpha_grid{0.0, 0.1};
  std::vector<double> temperature_grid{1.0, 2.0, 4.0};
  double beta = 1.0;

  bool analyze_eta = true;
  bool analyze_projection = true;
  bool analyze_smoothness = true;
  bool analyze_class_accuracy = true;
  bool analyze_dominance = true;
  double eta_reference_temperature = 1.0;
  SetSource set_source = SetSource::GroundTruth;
  std::string sets_file;
  double similar_frac = 0.15;
  double dissimilar_frac = 0.5;
  std::array<int, 3> projection_classes{0, 1, 2};
  double dominance_factor = 100.0;
  std::vector<double> smoothness_temperatures{1.0, 1.5, 2.0, 3.0, 8.0, 64.0};
};

/// The built-in experiment: the hierarchical synthetic dataset with two
/// teachers (plain and smoothed) distilled across temperatures 1, 2, 4.
ExperimentConfig default_config();

ExperimentConfig parse_config_file(const std::filesystem::path& path);

/// Throws ConfigError when grids, fractions, or paths make no sense
/// together. Called by every phase.
void validate_config(const ExperimentConfig& cfg);

/// Stable fingerprint of every semantic field, recorded in the run manifest.
std::string config_hash(const ExperimentConfig& cfg);

/// Penultimate-layer representations of every sample.
FeatureMatrix extract_features(const NetworkParams& net,
                               const LabeledDataset& data,
                               double temperature_tag, Split split);

/// Binary feature dump, bit-exact round trip.
void dump_features(const FeatureMatrix& features,
                   const std::filesystem::path& path);
void dump_features(const NetworkParams& net, const LabeledDataset& data,
                   double temperature_tag, Split split,
                   const std::filesystem::path& path);
FeatureMatrix load_features(const std::filesystem::path& path);

// Experiment phases. Each returns the number of failed units of work
// (0 means success); the CLI maps nonzero to exit code 1. Phases read their
// inputs from the output directory written by the earlier phases.
int cmd_gen_data(const ExperimentConfig& cfg);
int cmd_train_teacher(const ExperimentConfig& cfg);
int cmd_distill(const ExperimentConfig& cfg);
int cmd_analyze(const ExperimentConfig& cfg);
int cmd_report(const ExperimentConfig& cfg);

// Artifact layout helpers, all relative to cfg.output_dir.
std::string grid_tag(double value);  // "0.1", "4", "1.5"
std::filesystem::path dataset_path(const ExperimentConfig& cfg, Split split);
std::filesystem::path teacher_checkpoint_path(const ExperimentConfig& cfg,
                                              double alpha);
std::filesystem::path teacher_features_path(const ExperimentConfig& cfg,
                                            double alpha, Split split);
std::filesystem::path cell_dir(const ExperimentConfig& cfg, double alpha,
                               double temperature);
std::filesystem::path student_checkpoint_path(const ExperimentConfig& cfg,
                                              double alpha, double temperature);
std::filesystem::path student_features_path(const ExperimentConfig& cfg,
                                            double alpha, double temperature,
                                            Split split);

}  // namespace dlab
