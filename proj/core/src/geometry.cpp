#include "dlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dlab/io.hpp"

namespace dlab {

namespace {

void check_features(const FeatureMatrix& features, const char* who) {
  if (features.rows.rows() != features.labels.size()) {
    throw ShapeError(std::string(who) + ": rows and labels disagree");
  }
  if (features.num_classes < 1) {
    throw DomainError(std::string(who) + ": num_classes must be positive");
  }
  if (!(features.temperature_tag > 0.0)) {
    throw DomainError(std::string(who) + ": temperature tag must be positive");
  }
  for (int label : features.labels) {
    if (label < 0 || label >= features.num_classes) {
      throw DomainError(std::string(who) + ": label " + std::to_string(label) +
                        " out of range");
    }
  }
}

void check_member(const ClassCentroids& cents, int k, const char* who) {
  if (k < 0 || static_cast<std::size_t>(k) >= cents.centroids.rows()) {
    throw DomainError(std::string(who) + ": class " + std::to_string(k) +
                      " out of range");
  }
  if (cents.empty_class(k)) {
    throw GeometryError(std::string(who) + ": class " + std::to_string(k) +
                        " has no samples, centroid undefined");
  }
}

}  // namespace

ClassCentroids centroids(const FeatureMatrix& features, int num_classes) {
  check_features(features, "centroids");
  if (num_classes < features.num_classes) {
    throw DomainError("centroids: num_classes smaller than the labels imply");
  }
  ClassCentroids out;
  out.centroids = Matrix(static_cast<std::size_t>(num_classes),
                         features.rows.cols());
  out.counts.assign(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < features.rows.rows(); ++i) {
    const auto k = static_cast<std::size_t>(features.labels[i]);
    ++out.counts[k];
    for (std::size_t d = 0; d < features.rows.cols(); ++d) {
      out.centroids(k, d) += features.rows(i, d);
    }
  }
  for (std::size_t k = 0; k < out.counts.size(); ++k) {
    if (out.counts[k] == 0) {
      continue;
    }
    const double inv = 1.0 / static_cast<double>(out.counts[k]);
    for (std::size_t d = 0; d < out.centroids.cols(); ++d) {
      out.centroids(k, d) *= inv;
    }
  }
  return out;
}

namespace {

double normalizer(const ClassCentroids& cents, int target,
                  const SemanticSets& sets, const char* who) {
  check_member(cents, target, who);
  double r = 0.0;
  for (const std::vector<int>* side : {&sets.similar, &sets.dissimilar}) {
    for (int k : *side) {
      check_member(cents, k, who);
      r += squared_distance(cents.centroids.row(static_cast<std::size_t>(target)),
                            cents.centroids.row(static_cast<std::size_t>(k)));
    }
  }
  if (r <= 0.0) {
    throw GeometryError(std::string(who) +
                        ": all centroids in the semantic sets coincide with "
                        "the target, normalizer is zero");
  }
  return r;
}

bool set_contains(const std::vector<int>& sorted, int x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

}  // namespace

double relative_distance(const ClassCentroids& cents, int target, int other,
                         const SemanticSets& sets) {
  validate_sets(sets, static_cast<int>(cents.centroids.rows()));
  if (sets.target != target) {
    throw DomainError("relative_distance: sets were selected for target " +
                      std::to_string(sets.target));
  }
  if (!set_contains(sets.similar, other) &&
      !set_contains(sets.dissimilar, other)) {
    throw DomainError("relative_distance: class " + std::to_string(other) +
                      " is in neither semantic set");
  }
  check_member(cents, other, "relative_distance");
  const double r = normalizer(cents, target, sets, "relative_distance");
  return squared_distance(cents.centroids.row(static_cast<std::size_t>(target)),
                          cents.centroids.row(static_cast<std::size_t>(other))) /
         r;
}

namespace {

struct PerClassStats {
  ClassCentroids cents;
  std::vector<double> mean_sq_dev;  // mean ||x - centroid||^2 per class
};

PerClassStats class_stats(const FeatureMatrix& features) {
  PerClassStats stats;
  stats.cents = centroids(features, features.num_classes);
  stats.mean_sq_dev.assign(static_cast<std::size_t>(features.num_classes), 0.0);
  for (std::size_t i = 0; i < features.rows.rows(); ++i) {
    const auto k = static_cast<std::size_t>(features.labels[i]);
    stats.mean_sq_dev[k] +=
        squared_distance(features.rows.row(i), stats.cents.centroids.row(k));
  }
  for (std::size_t k = 0; k < stats.mean_sq_dev.size(); ++k) {
    if (stats.cents.counts[k] > 0) {
      stats.mean_sq_dev[k] /= static_cast<double>(stats.cents.counts[k]);
    }
  }
  return stats;
}

// Squared separation between target and another class. The centroid variant
// uses the squared centroid distance; the pairwise variant uses the mean
// squared distance over all cross-class sample pairs, which decomposes as
//   E||x - y||^2 = ||c_x - c_y||^2 + E||x - c_x||^2 + E||y - c_y||^2.
double separation(const PerClassStats& stats, int a, int b,
                  EtaVariant variant) {
  const double d =
      squared_distance(stats.cents.centroids.row(static_cast<std::size_t>(a)),
                       stats.cents.centroids.row(static_cast<std::size_t>(b)));
  if (variant == EtaVariant::Centroid) {
    return d;
  }
  return d + stats.mean_sq_dev[static_cast<std::size_t>(a)] +
         stats.mean_sq_dev[static_cast<std::size_t>(b)];
}

double eta_impl(const FeatureMatrix& at_t1, const FeatureMatrix& at_t2,
                const SemanticSets& sets, SetSide side, EtaVariant variant) {
  const char* who = variant == EtaVariant::Centroid
                        ? "diffusion_index"
                        : "diffusion_index_pairwise";
  check_features(at_t1, who);
  check_features(at_t2, who);
  if (at_t1.num_classes != at_t2.num_classes) {
    throw ShapeError(std::string(who) + ": class counts differ");
  }
  if (at_t1.rows.cols() != at_t2.rows.cols()) {
    throw ShapeError(std::string(who) + ": feature widths differ");
  }
  if (at_t1.split != at_t2.split) {
    throw DomainError(std::string(who) +
                      ": features come from different splits");
  }
  if (at_t1.temperature_tag == at_t2.temperature_tag) {
    throw DomainError(std::string(who) +
                      ": both feature sets carry the same temperature tag; "
                      "nothing to compare");
  }
  validate_sets(sets, at_t1.num_classes);

  const PerClassStats s1 = class_stats(at_t1);
  const PerClassStats s2 = class_stats(at_t2);

  auto relative = [&](const PerClassStats& stats, int k) {
    double r = 0.0;
    for (const std::vector<int>* group : {&sets.similar, &sets.dissimilar}) {
      for (int m : *group) {
        check_member(stats.cents, m, who);
        r += separation(stats, sets.target, m, variant);
      }
    }
    check_member(stats.cents, sets.target, who);
    if (r <= 0.0) {
      throw GeometryError(std::string(who) + ": zero normalizer for target " +
                          std::to_string(sets.target));
    }
    return separation(stats, sets.target, k, variant) / r;
  };

  const std::vector<int>& members =
      side == SetSide::Similar ? sets.similar : sets.dissimilar;
  double acc = 0.0;
  for (int k : members) {
    const double d1 = relative(s1, k);
    const double d2 = relative(s2, k);
    if (d1 <= 0.0) {
      throw GeometryError(std::string(who) + ": relative distance to class " +
                          std::to_string(k) +
                          " vanishes at the reference temperature");
    }
    acc += (d2 - d1) / d1;
  }
  return acc / static_cast<double>(members.size());
}

}  // namespace

double diffusion_index(const FeatureMatrix& at_t1, const FeatureMatrix& at_t2,
                       const SemanticSets& sets, SetSide side) {
  return eta_impl(at_t1, at_t2, sets, side, EtaVariant::Centroid);
}

double diffusion_index_pairwise(const FeatureMatrix& at_t1,
                                const FeatureMatrix& at_t2,
                                const SemanticSets& sets, SetSide side) {
  return eta_impl(at_t1, at_t2, sets, side, EtaVariant::Pairwise);
}

SemanticSets select_semantic_sets(const ClassCentroids& cents, int target,
                                  double similar_frac, double dissimilar_frac) {
  const auto k = static_cast<int>(cents.centroids.rows());
  if (target < 0 || target >= k) {
    throw DomainError("select_semantic_sets: target out of range");
  }
  if (!(similar_frac > 0.0 && similar_frac < 1.0) ||
      !(dissimilar_frac > 0.0 && dissimilar_frac < 1.0)) {
    throw DomainError("select_semantic_sets: fractions must lie in (0, 1)");
  }
  check_member(cents, target, "select_semantic_sets");
  std::vector<std::pair<double, int>> by_distance;
  by_distance.reserve(static_cast<std::size_t>(k) - 1);
  for (int c = 0; c < k; ++c) {
    if (c == target) {
      continue;
    }
    check_member(cents, c, "select_semantic_sets");
    by_distance.emplace_back(
        squared_distance(cents.centroids.row(static_cast<std::size_t>(target)),
                         cents.centroids.row(static_cast<std::size_t>(c))),
        c);
  }
  const auto candidates = by_distance.size();
  if (candidates == 0) {
    throw DomainError("select_semantic_sets: no candidate classes");
  }
  const auto n_similar = static_cast<std::size_t>(
      std::ceil(similar_frac * static_cast<double>(candidates)));
  const auto n_dissimilar = static_cast<std::size_t>(
      std::ceil(dissimilar_frac * static_cast<double>(candidates)));
  if (n_similar + n_dissimilar > candidates) {
    throw DomainError(
        "select_semantic_sets: similar and dissimilar bands overlap (" +
        std::to_string(n_similar) + " + " + std::to_string(n_dissimilar) +
        " classes out of " + std::to_string(candidates) + ")");
  }
  // One ranking by (distance, class index) ascending; the similar band is
  // its head, the dissimilar band its tail. Ties therefore resolve
  // deterministically and the two bands can never collide.
  std::sort(by_distance.begin(), by_distance.end());
  SemanticSets sets;
  sets.target = target;
  for (std::size_t i = 0; i < n_similar; ++i) {
    sets.similar.push_back(by_distance[i].second);
  }
  for (std::size_t i = candidates - n_dissimilar; i < candidates; ++i) {
    sets.dissimilar.push_back(by_distance[i].second);
  }
  std::sort(sets.similar.begin(), sets.similar.end());
  std::sort(sets.dissimilar.begin(), sets.dissimilar.end());
  validate_sets(sets, k);
  return sets;
}

std::vector<double> cluster_tightness(const FeatureMatrix& features) {
  check_features(features, "cluster_tightness");
  const PerClassStats stats = class_stats(features);
  std::vector<double> out(stats.mean_sq_dev.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c] = stats.cents.counts[c] == 0
                 ? std::numeric_limits<double>::quiet_NaN()
                 : stats.mean_sq_dev[c];
  }
  return out;
}

double template_distance(std::span<const double> penultimate,
                         const DenseLayer& final_layer, int k) {
  if (k < 0 || static_cast<std::size_t>(k) >= final_layer.out_dim()) {
    throw DomainError("template_distance: class out of range");
  }
  if (penultimate.size() != final_layer.in_dim()) {
    throw ShapeError("template_distance: representation width " +
                     std::to_string(penultimate.size()) +
                     " does not match the final layer");
  }
  const auto row = final_layer.weights.row(static_cast<std::size_t>(k));
  double d = 0.0;
  for (std::size_t i = 0; i < penultimate.size(); ++i) {
    const double diff = penultimate[i] - row[i];
    d += diff * diff;
  }
  // The representation is augmented with a trailing 1 and the template with
  // its bias, so the bias participates in the geometry exactly as it does in
  // the logits.
  const double bias_diff = 1.0 - final_layer.bias[static_cast<std::size_t>(k)];
  return d + bias_diff * bias_diff;
}

ClassAccuracy class_accuracy(const NetworkParams& net,
                             const LabeledDataset& data) {
  if (data.size() == 0) {
    throw DomainError("class_accuracy: empty dataset");
  }
  ClassAccuracy acc;
  acc.correct.assign(static_cast<std::size_t>(data.num_classes), 0);
  acc.total.assign(static_cast<std::size_t>(data.num_classes), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int label = data.labels[i];
    if (label < 0 || label >= data.num_classes) {
      throw DomainError("class_accuracy: label out of range");
    }
    const ForwardTrace trace = forward(net, data.inputs.row(i));
    const auto logits = trace.logits();
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
      if (logits[c] > logits[best]) {
        best = c;
      }
    }
    ++acc.total[static_cast<std::size_t>(label)];
    if (best == static_cast<std::size_t>(label)) {
      ++acc.correct[static_cast<std::size_t>(label)];
    }
  }
  acc.per_class.resize(acc.total.size());
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < acc.total.size(); ++c) {
    if (acc.total[c] == 0) {
      acc.per_class[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    acc.per_class[c] = static_cast<double>(acc.correct[c]) /
                       static_cast<double>(acc.total[c]);
    sum += acc.per_class[c];
    ++present;
  }
  acc.macro_mean = present == 0 ? 0.0 : sum / static_cast<double>(present);
  return acc;
}

const char* split_name(Split split) {
  return split == Split::Train ? "train" : "val";
}

const char* variant_name(EtaVariant variant) {
  return variant == EtaVariant::Centroid ? "centroid" : "pairwise";
}

void write_eta_csv(const DiffusionReport& report,
                   const std::filesystem::path& path) {
  std::ofstream out = io::open_output(path, /*binary=*/false);
  out << "target,split,variant,T1,T2,eta_S1,eta_S2\n";
  for (const DiffusionEntry& e : report) {
    out << e.target << ',' << split_name(e.split) << ','
        << variant_name(e.variant) << ',' << io::format_double(e.t1) << ','
        << io::format_double(e.t2) << ',' << io::format_double(e.eta_similar)
        << ',' << io::format_double(e.eta_dissimilar) << '\n';
  }
  if (!out) {
    throw IoError("write_eta_csv: write failed for " + path.string());
  }
}

}  // namespace dlab
