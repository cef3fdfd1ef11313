#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "dlab/error.hpp"

namespace dlab {

/// For one target class: the indices of classes considered semantically
/// similar to it and those considered dissimilar. The two sets are disjoint,
/// nonempty, and never contain the target itself.
struct SemanticSets {
  int target = 0;
  std::vector<int> similar;     // sorted ascending
  std::vector<int> dissimilar;  // sorted ascending
};

/// Throws DomainError unless the invariants above hold (and, when
/// num_classes >= 0, that every index is a valid class).
void validate_sets(const SemanticSets& sets, int num_classes = -1);

/// Overlap of two selections for the same target:
///   (|similar_a intersect similar_b| / |similar_a|,
///    |dissimilar_a intersect dissimilar_b| / |dissimilar_a|).
std::pair<double, double> set_consistency(const SemanticSets& a,
                                          const SemanticSets& b);

/// Parses a semantic-set file, one record per line:
///   target=<id>; S1=<id,id,...>; S2=<id,id,...>
/// Blank lines and lines starting with '#' are ignored. Each record is
/// validated against num_classes when it is nonnegative.
std::vector<SemanticSets> parse_semantic_sets_file(
    const std::filesystem::path& path, int num_classes = -1);

}  // namespace dlab
