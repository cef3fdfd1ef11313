#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dlab/matrix.hpp"
#include "dlab/nn.hpp"
#include "dlab/semantic_sets.hpp"

namespace dlab {

enum class Split { Train, Val };

/// Penultimate-layer representations of one model on one data split,
/// tagged with the distillation temperature that produced the model.
/// Feature rows from models trained at different temperatures are only
/// comparable through the relative quantities below.
struct FeatureMatrix {
  Matrix rows;  // N x h
  std::vector<int> labels;
  int num_classes = 0;
  Split split = Split::Train;
  double temperature_tag = 1.0;
};

struct ClassCentroids {
  Matrix centroids;  // K x h
  std::vector<std::size_t> counts;

  bool empty_class(int k) const {
    return counts[static_cast<std::size_t>(k)] == 0;
  }
};

enum class SetSide { Similar, Dissimilar };
enum class EtaVariant { Centroid, Pairwise };

struct DiffusionEntry {
  int target = 0;
  Split split = Split::Train;
  EtaVariant variant = EtaVariant::Centroid;
  double t1 = 1.0;
  double t2 = 1.0;
  double eta_similar = 0.0;
  double eta_dissimilar = 0.0;
};
using DiffusionReport = std::vector<DiffusionEntry>;

/// Per-class mean rows. Classes with no samples are flagged through a zero
/// count, never silently skipped.
ClassCentroids centroids(const FeatureMatrix& features, int num_classes);

/// Share of the target's squared centroid distance attributed to `other`:
///   ||c_target - c_other||^2 / R,
/// where R sums the squared distances from the target to every class in
/// both semantic sets. Relative distances over a fixed set sum to one, which
/// is what makes models trained at different temperatures comparable.
double relative_distance(const ClassCentroids& cents, int target, int other,
                         const SemanticSets& sets);

/// Mean relative change of relative distance when moving from the features
/// tagged t1 to those tagged t2, averaged over one side of the semantic
/// sets. Negative means that side drew closer to the target, relative to
/// the combined geometry.
double diffusion_index(const FeatureMatrix& at_t1, const FeatureMatrix& at_t2,
                       const SemanticSets& sets, SetSide side);

/// As diffusion_index, but each squared centroid distance is replaced by
/// the mean squared distance over all cross-class sample pairs. Coincides
/// with the centroid variant when every class has zero within-class spread.
double diffusion_index_pairwise(const FeatureMatrix& at_t1,
                                const FeatureMatrix& at_t2,
                                const SemanticSets& sets, SetSide side);

/// Data-driven selection: candidates are ranked once by (centroid distance,
/// class index) ascending; the nearest ceil(similar_frac * (K-1)) classes
/// become the similar set and the farthest ceil(dissimilar_frac * (K-1)) the
/// dissimilar set. The two bands must not overlap.
SemanticSets select_semantic_sets(const ClassCentroids& cents, int target,
                                  double similar_frac, double dissimilar_frac);

/// Per-class mean squared distance to the class's own centroid. Entries for
/// empty classes are NaN.
std::vector<double> cluster_tightness(const FeatureMatrix& features);

/// Squared distance between the bias-augmented representation [x; 1] and the
/// class template [w_k; b_k] of the final layer.
double template_distance(std::span<const double> penultimate,
                         const DenseLayer& final_layer, int k);

struct ClassAccuracy {
  std::vector<std::size_t> correct;
  std::vector<std::size_t> total;
  std::vector<double> per_class;  // NaN where total is zero
  double macro_mean = 0.0;        // over classes that appear
};

/// Top-1 accuracy per class (argmax of the logits, ties toward the lower
/// index) plus the macro average.
ClassAccuracy class_accuracy(const NetworkParams& net,
                             const LabeledDataset& data);

/// CSV with header target,split,variant,T1,T2,eta_S1,eta_S2.
void write_eta_csv(const DiffusionReport& report,
                   const std::filesystem::path& path);

const char* split_name(Split split);
const char* variant_name(EtaVariant variant);

}  // namespace dlab
