#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dlab/dataset.hpp"
#include "dlab/geometry.hpp"
#include "doctest.h"

using namespace dlab;
namespace fs = std::filesystem;

namespace {

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(out.good());
}

HierarchySpec small_spec() {
  HierarchySpec spec;
  spec.num_groups = 3;
  spec.classes_per_group = 2;
  spec.input_dim = 6;
  spec.group_spread = 10.0;
  spec.class_spread = 1.0;
  spec.noise_sigma = 0.4;
  spec.samples_per_class_train = 5;
  spec.samples_per_class_val = 3;
  spec.seed = 11;
  return spec;
}

}  // namespace

TEST_CASE("generation is deterministic in the spec") {
  const HierarchySpec spec = small_spec();
  const GeneratedData a = generate(spec);
  const GeneratedData b = generate(spec);
  CHECK(a.train.inputs == b.train.inputs);
  CHECK(a.val.inputs == b.val.inputs);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.class_means == b.class_means);

  HierarchySpec other = spec;
  other.seed = 12;
  const GeneratedData c = generate(other);
  CHECK_FALSE(a.train.inputs == c.train.inputs);
}

TEST_CASE("generation respects the requested shape") {
  const HierarchySpec spec = small_spec();
  const GeneratedData g = generate(spec);
  const std::size_t k = spec.num_classes();
  CHECK(g.train.num_classes == static_cast<int>(k));
  CHECK(g.train.inputs.rows() == k * spec.samples_per_class_train);
  CHECK(g.val.inputs.rows() == k * spec.samples_per_class_val);
  CHECK(g.train.inputs.cols() == spec.input_dim);
  CHECK(g.class_means.rows() == k);
  CHECK(g.class_means.cols() == spec.input_dim);

  std::vector<std::size_t> train_counts(k, 0);
  for (int l : g.train.labels) {
    REQUIRE(l >= 0);
    REQUIRE(l < static_cast<int>(k));
    ++train_counts[static_cast<std::size_t>(l)];
  }
  for (std::size_t c = 0; c < k; ++c) {
    CHECK(train_counts[c] == spec.samples_per_class_train);
  }
  std::vector<std::size_t> val_counts(k, 0);
  for (int l : g.val.labels) {
    ++val_counts[static_cast<std::size_t>(l)];
  }
  for (std::size_t c = 0; c < k; ++c) {
    CHECK(val_counts[c] == spec.samples_per_class_val);
  }

  REQUIRE(g.train.class_group.has_value());
  const std::vector<int>& groups = *g.train.class_group;
  REQUIRE(groups.size() == k);
  std::vector<std::size_t> group_sizes(spec.num_groups, 0);
  for (int gi : groups) {
    REQUIRE(gi >= 0);
    REQUIRE(gi < static_cast<int>(spec.num_groups));
    ++group_sizes[static_cast<std::size_t>(gi)];
  }
  for (std::size_t gi = 0; gi < spec.num_groups; ++gi) {
    CHECK(group_sizes[gi] == spec.classes_per_group);
  }
  CHECK(g.val.class_group == g.train.class_group);
}

TEST_CASE("zero noise collapses samples onto the class means") {
  HierarchySpec spec = small_spec();
  spec.noise_sigma = 0.0;
  const GeneratedData g = generate(spec);
  for (std::size_t r = 0; r < g.train.inputs.rows(); ++r) {
    const int label = g.train.labels[r];
    for (std::size_t c = 0; c < spec.input_dim; ++c) {
      CHECK(g.train.inputs(r, c) ==
            g.class_means(static_cast<std::size_t>(label), c));
    }
  }

  spec.noise_sigma = -0.1;
  CHECK_THROWS_AS(generate(spec), DomainError);
}

TEST_CASE("class means separate groups from classes") {
  HierarchySpec spec;
  spec.seed = 5;
  const GeneratedData g = generate(spec);
  const std::vector<int>& groups = *g.train.class_group;
  const std::size_t k = spec.num_classes();

  double max_intra = 0.0;
  double min_inter = 1e300;
  double intra_sum = 0.0;
  double inter_sum = 0.0;
  std::size_t intra_n = 0;
  std::size_t inter_n = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double d = squared_distance(g.class_means.row(a),
                                        g.class_means.row(b));
      if (groups[a] == groups[b]) {
        max_intra = std::max(max_intra, d);
        intra_sum += d;
        ++intra_n;
      } else {
        min_inter = std::min(min_inter, d);
        inter_sum += d;
        ++inter_n;
      }
    }
  }
  REQUIRE(intra_n == 4);
  REQUIRE(inter_n == 24);
  CHECK(max_intra < min_inter);
  CHECK(intra_sum / double(intra_n) < 0.3 * (inter_sum / double(inter_n)));
}

TEST_CASE("ground-truth sets mirror the group map") {
  HierarchySpec spec;
  spec.seed = 2;
  const GeneratedData g = generate(spec);
  const std::vector<int>& groups = *g.train.class_group;
  const int k = g.train.num_classes;
  for (int target = 0; target < k; ++target) {
    const SemanticSets sets = ground_truth_sets(g.train, target);
    CHECK(sets.target == target);
    CHECK(sets.similar.size() == spec.classes_per_group - 1);
    CHECK(sets.dissimilar.size() ==
          static_cast<std::size_t>(k) - spec.classes_per_group);
    for (int c : sets.similar) {
      CHECK(groups[static_cast<std::size_t>(c)] ==
            groups[static_cast<std::size_t>(target)]);
    }
    for (int c : sets.dissimilar) {
      CHECK(groups[static_cast<std::size_t>(c)] !=
            groups[static_cast<std::size_t>(target)]);
    }
    validate_sets(sets, k);
  }

  CHECK_THROWS_AS(ground_truth_sets(g.train, k), DomainError);

  LabeledDataset no_group = g.train;
  no_group.class_group.reset();
  CHECK_THROWS_AS(ground_truth_sets(no_group, 0), DomainError);

  // Singleton groups leave nothing to call similar.
  HierarchySpec lone;
  lone.num_groups = 4;
  lone.classes_per_group = 1;
  lone.seed = 3;
  const GeneratedData solo = generate(lone);
  CHECK_THROWS_AS(ground_truth_sets(solo.train, 0), DomainError);
}

TEST_CASE("distance-based selection recovers the ground-truth sets") {
  HierarchySpec spec;
  spec.seed = 9;
  const GeneratedData g = generate(spec);
  const int k = g.train.num_classes;

  FeatureMatrix mean_features;
  mean_features.rows = g.class_means;
  mean_features.num_classes = k;
  for (int c = 0; c < k; ++c) {
    mean_features.labels.push_back(c);
  }
  const ClassCentroids cents = centroids(mean_features, k);

  for (int target = 0; target < k; ++target) {
    const SemanticSets truth = ground_truth_sets(g.train, target);
    const SemanticSets picked =
        select_semantic_sets(cents, target, 0.14, 0.85);
    CHECK(picked.similar.size() == 1);
    CHECK(picked.dissimilar.size() == 6);
    const auto [s1_overlap, s2_overlap] = set_consistency(truth, picked);
    CHECK(s1_overlap >= 0.9);
    CHECK(s2_overlap >= 0.9);
  }
}

TEST_CASE("train and val draws are distinct") {
  const HierarchySpec spec = small_spec();
  const GeneratedData g = generate(spec);
  for (std::size_t r = 0; r < g.train.inputs.rows(); ++r) {
    for (std::size_t v = 0; v < g.val.inputs.rows(); ++v) {
      bool same = true;
      for (std::size_t c = 0; c < spec.input_dim && same; ++c) {
        same = g.train.inputs(r, c) == g.val.inputs(v, c);
      }
      CHECK_FALSE(same);
    }
  }
}

TEST_CASE("dataset files round trip bit for bit") {
  const fs::path dir = fs::temp_directory_path() / "dlab_dataset_test";
  fs::create_directories(dir);
  const GeneratedData g = generate(small_spec());

  const fs::path first = dir / "train.dset";
  const fs::path second = dir / "again.dset";
  save_dataset(g.train, first);
  const LabeledDataset loaded = load_dataset(first);
  CHECK(loaded.inputs == g.train.inputs);
  CHECK(loaded.labels == g.train.labels);
  CHECK(loaded.num_classes == g.train.num_classes);
  CHECK(loaded.class_group == g.train.class_group);

  save_dataset(loaded, second);
  CHECK(slurp(first) == slurp(second));

  // Without a group map the optional stays empty through the round trip.
  LabeledDataset bare = g.train;
  bare.class_group.reset();
  const fs::path plain = dir / "plain.dset";
  save_dataset(bare, plain);
  CHECK_FALSE(load_dataset(plain).class_group.has_value());

  fs::remove_all(dir);
}

TEST_CASE("corrupt dataset files fail loudly") {
  const fs::path dir = fs::temp_directory_path() / "dlab_dataset_corrupt";
  fs::create_directories(dir);
  const GeneratedData g = generate(small_spec());
  const fs::path path = dir / "data.dset";
  save_dataset(g.train, path);
  const std::vector<char> bytes = slurp(path);

  // Truncation anywhere past the magic is a parse error.
  const fs::path cut = dir / "cut.dset";
  spit(cut, std::vector<char>(bytes.begin(), bytes.end() - 7));
  CHECK_THROWS_AS(load_dataset(cut), ParseError);

  const fs::path tiny = dir / "tiny.dset";
  spit(tiny, std::vector<char>(bytes.begin(), bytes.begin() + 3));
  CHECK_THROWS_AS(load_dataset(tiny), ParseError);

  // A wrong magic is rejected before anything else is read.
  std::vector<char> wrong = bytes;
  wrong[0] = 'X';
  const fs::path bad_magic = dir / "magic.dset";
  spit(bad_magic, wrong);
  CHECK_THROWS_AS(load_dataset(bad_magic), ParseError);

  // Labels are the trailing block; forging an out-of-range one is caught.
  std::vector<char> forged = bytes;
  for (std::size_t i = forged.size() - 4; i < forged.size(); ++i) {
    forged[i] = static_cast<char>(0xFF);
  }
  const fs::path bad_label = dir / "label.dset";
  spit(bad_label, forged);
  CHECK_THROWS_AS(load_dataset(bad_label), DomainError);

  CHECK_THROWS_AS(load_dataset(dir / "missing.dset"), IoError);
  fs::remove_all(dir);
}
