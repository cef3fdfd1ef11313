#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "dlab/matrix.hpp"
#include "dlab/semantic_sets.hpp"

namespace dlab {

/// Two-level synthetic class hierarchy: groups of semantically similar
/// classes. Group anchors sit on a sphere of radius group_spread; each class
/// mean is its group anchor plus a perturbation of norm class_spread; samples
/// are the class mean plus isotropic Gaussian noise.
struct HierarchySpec {
  std::size_t num_groups = 4;
  std::size_t classes_per_group = 2;
  std::size_t input_dim = 16;
  double group_spread = 10.0;
  double class_spread = 1.0;
  double noise_sigma = 0.5;
  std::size_t samples_per_class_train = 150;
  std::size_t samples_per_class_val = 50;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return num_groups * classes_per_group; }
};

/// Feature vectors with integer labels. class_group maps each class to its
/// semantic group when that is known (always for generated data, and for
/// datasets saved by this library; absent otherwise).
struct LabeledDataset {
  Matrix inputs;  // N x input_dim
  std::vector<int> labels;
  int num_classes = 0;
  std::optional<std::vector<int>> class_group;  // indexed by class

  std::size_t size() const { return labels.size(); }
};

struct GeneratedData {
  LabeledDataset train;
  LabeledDataset val;
  Matrix class_means;  // K x input_dim, exact means before noise
};

/// Deterministic for a fixed spec (including its seed). Regenerates the
/// class-mean layout, consuming further draws from the same stream, in the
/// unlikely event a draw violates the hierarchy (some intra-group class-mean
/// distance not smaller than every inter-group one); gives up with a
/// DomainError if the spec cannot satisfy it.
GeneratedData generate(const HierarchySpec& spec);

/// Ground-truth semantic sets implied by the group map: similar = the other
/// classes in target's group, dissimilar = everything else.
SemanticSets ground_truth_sets(const LabeledDataset& data, int target);

/// Binary dataset file, bit-exact round trip.
void save_dataset(const LabeledDataset& data,
                  const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace dlab
