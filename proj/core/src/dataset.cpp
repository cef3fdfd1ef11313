#include "dlab/dataset.hpp"

#include <cmath>
#include <string>

#include "dlab/io.hpp"
#include "dlab/rng.hpp"

namespace dlab {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'E', 'T'};
constexpr std::uint16_t kVersion = 1;
constexpr int kMaxLayoutAttempts = 100;

void check_spec(const HierarchySpec& spec) {
  if (spec.num_groups < 1 || spec.classes_per_group < 1) {
    throw DomainError("generate: need at least one group and one class");
  }
  if (spec.input_dim < 1) {
    throw DomainError("generate: input_dim must be positive");
  }
  if (!(spec.group_spread > 0.0)) {
    throw DomainError("generate: group_spread must be positive");
  }
  if (!(spec.class_spread > 0.0)) {
    throw DomainError("generate: class_spread must be positive");
  }
  if (!(spec.class_spread < spec.group_spread)) {
    throw DomainError("generate: class_spread must be smaller than "
                      "group_spread to form a hierarchy");
  }
  if (spec.noise_sigma < 0.0) {
    throw DomainError("generate: noise_sigma must be nonnegative");
  }
  if (spec.samples_per_class_train < 1 || spec.samples_per_class_val < 1) {
    throw DomainError("generate: need at least one sample per class per split");
  }
}

// Uniform direction scaled to `radius`.
std::vector<double> sphere_point(Rng& rng, std::size_t dim, double radius) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-12);
  for (double& x : v) {
    x *= radius / norm;
  }
  return v;
}

bool hierarchy_holds(const Matrix& means, const std::vector<int>& group_of) {
  double max_intra = 0.0;
  double min_inter = std::numeric_limits<double>::infinity();
  const std::size_t k = means.rows();
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double d = squared_distance(means.row(a), means.row(b));
      if (group_of[a] == group_of[b]) {
        max_intra = std::max(max_intra, d);
      } else {
        min_inter = std::min(min_inter, d);
      }
    }
  }
  if (!std::isfinite(min_inter)) {
    return true;  // single group: nothing to compare
  }
  return max_intra < min_inter;
}

}  // namespace

GeneratedData generate(const HierarchySpec& spec) {
  check_spec(spec);
  const std::size_t k = spec.num_classes();
  Rng rng(spec.seed);

  std::vector<int> group_of(k);
  for (std::size_t c = 0; c < k; ++c) {
    group_of[c] = static_cast<int>(c / spec.classes_per_group);
  }

  Matrix means(k, spec.input_dim);
  bool placed = false;
  for (int attempt = 0; attempt < kMaxLayoutAttempts && !placed; ++attempt) {
    for (std::size_t g = 0; g < spec.num_groups; ++g) {
      const std::vector<double> anchor =
          sphere_point(rng, spec.input_dim, spec.group_spread);
      for (std::size_t c = 0; c < spec.classes_per_group; ++c) {
        const std::vector<double> offset =
            sphere_point(rng, spec.input_dim, spec.class_spread);
        const std::size_t cls = g * spec.classes_per_group + c;
        for (std::size_t d = 0; d < spec.input_dim; ++d) {
          means(cls, d) = anchor[d] + offset[d];
        }
      }
    }
    placed = hierarchy_holds(means, group_of);
  }
  if (!placed) {
    throw DomainError(
        "generate: could not draw a class-mean layout whose intra-group "
        "distances all stay below the inter-group ones; spreads too close");
  }

  auto make_split = [&](std::size_t per_class) {
    LabeledDataset out;
    out.num_classes = static_cast<int>(k);
    out.class_group = group_of;
    out.inputs = Matrix(k * per_class, spec.input_dim);
    out.labels.resize(k * per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t s = 0; s < per_class; ++s, ++row) {
        for (std::size_t d = 0; d < spec.input_dim; ++d) {
          out.inputs(row, d) = means(c, d) + spec.noise_sigma * rng.gaussian();
        }
        out.labels[row] = static_cast<int>(c);
      }
    }
    return out;
  };

  GeneratedData data;
  data.train = make_split(spec.samples_per_class_train);
  data.val = make_split(spec.samples_per_class_val);
  data.class_means = std::move(means);
  return data;
}

SemanticSets ground_truth_sets(const LabeledDataset& data, int target) {
  if (!data.class_group) {
    throw DomainError("ground_truth_sets: dataset carries no group map");
  }
  if (target < 0 || target >= data.num_classes) {
    throw DomainError("ground_truth_sets: target class " +
                      std::to_string(target) + " out of range");
  }
  const std::vector<int>& group_of = *data.class_group;
  SemanticSets sets;
  sets.target = target;
  for (int c = 0; c < data.num_classes; ++c) {
    if (c == target) {
      continue;
    }
    if (group_of[static_cast<std::size_t>(c)] ==
        group_of[static_cast<std::size_t>(target)]) {
      sets.similar.push_back(c);
    } else {
      sets.dissimilar.push_back(c);
    }
  }
  validate_sets(sets, data.num_classes);
  return sets;
}

void save_dataset(const LabeledDataset& data,
                  const std::filesystem::path& path) {
  if (data.inputs.rows() != data.labels.size()) {
    throw ShapeError("save_dataset: input rows and labels disagree");
  }
  std::ofstream out = io::open_output(path, /*binary=*/true);
  out.write(kMagic, 4);
  io::write_u16(out, kVersion);
  io::write_u32(out, static_cast<std::uint32_t>(data.num_classes));
  io::write_u32(out, static_cast<std::uint32_t>(data.inputs.cols()));
  io::write_u64(out, static_cast<std::uint64_t>(data.inputs.rows()));
  io::write_u8(out, data.class_group ? 1 : 0);
  if (data.class_group) {
    if (data.class_group->size() != static_cast<std::size_t>(data.num_classes)) {
      throw ShapeError("save_dataset: group map length is not num_classes");
    }
    for (int g : *data.class_group) {
      io::write_u32(out, static_cast<std::uint32_t>(g));
    }
  }
  for (std::size_t r = 0; r < data.inputs.rows(); ++r) {
    for (double v : data.inputs.row(r)) {
      io::write_f64(out, v);
    }
  }
  for (int label : data.labels) {
    io::write_u32(out, static_cast<std::uint32_t>(label));
  }
  if (!out) {
    throw IoError("save_dataset: write failed for " + path.string());
  }
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  io::Reader in(path);
  char magic[4];
  in.bytes(magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4)) {
    throw ParseError(0, path.string() + ": not a dataset file (bad magic)");
  }
  const std::uint16_t version = in.u16();
  if (version != kVersion) {
    in.fail("unsupported dataset version " + std::to_string(version));
  }
  LabeledDataset data;
  data.num_classes = static_cast<int>(in.u32());
  const std::size_t dim = in.u32();
  const std::size_t n = in.u64();
  if (data.num_classes < 1 || dim < 1) {
    in.fail("degenerate dataset header");
  }
  if (in.u8() != 0) {
    std::vector<int> groups(static_cast<std::size_t>(data.num_classes));
    for (int& g : groups) {
      g = static_cast<int>(in.u32());
    }
    data.class_group = std::move(groups);
  }
  data.inputs = Matrix(n, dim);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      data.inputs(r, c) = in.f64();
    }
  }
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = static_cast<int>(in.u32());
    if (data.labels[i] < 0 || data.labels[i] >= data.num_classes) {
      throw DomainError(path.string() + ": label " +
                        std::to_string(data.labels[i]) +
                        " out of range for " +
                        std::to_string(data.num_classes) + " classes");
    }
  }
  if (!in.at_end()) {
    in.fail("trailing data after dataset payload");
  }
  return data;
}

}  // namespace dlab
