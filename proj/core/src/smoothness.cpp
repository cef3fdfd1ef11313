#include "dlab/smoothness.hpp"

#include <cmath>
#include <string>

#include "dlab/io.hpp"

namespace dlab {

double entropy(const SoftDistribution& dist) {
  double h = 0.0;
  for (double p : dist.probs) {
    if (p < 0.0) {
      throw DomainError("entropy: negative probability");
    }
    if (p > 1e-300) {
      h -= p * std::log(p);
    }
  }
  return h;
}

double average_entropy(const NetworkParams& model, const LabeledDataset& data,
                       double temperature) {
  if (data.size() == 0) {
    throw DomainError("average_entropy: empty dataset");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ForwardTrace trace = forward(model, data.inputs.row(i));
    sum += entropy(tempered_softmax(trace.logits(), temperature));
  }
  return sum / static_cast<double>(data.size());
}

double entropy_matched_temperature(const NetworkParams& model,
                                   const LabeledDataset& data,
                                   double target_entropy,
                                   std::pair<double, double> bracket) {
  auto [lo, hi] = bracket;
  if (!(lo > 0.0) || !(hi > lo)) {
    throw DomainError("entropy_matched_temperature: bracket must satisfy "
                      "0 < lo < hi");
  }
  const double h_lo = average_entropy(model, data, lo);
  const double h_hi = average_entropy(model, data, hi);
  if (h_lo > h_hi) {
    throw DomainError(
        "entropy_matched_temperature: average entropy is not monotone on the "
        "bracket endpoints (" + io::format_double(h_lo) + " at T=" +
        io::format_double(lo) + ", " + io::format_double(h_hi) + " at T=" +
        io::format_double(hi) + ")");
  }
  if (target_entropy < h_lo || target_entropy > h_hi) {
    throw BracketError(
        "entropy_matched_temperature: target entropy " +
        io::format_double(target_entropy) + " lies outside [" +
        io::format_double(h_lo) + ", " + io::format_double(h_hi) +
        "] spanned by the bracket");
  }
  constexpr double kTol = 1e-6;
  constexpr int kMaxIters = 200;
  for (int iter = 0; iter < kMaxIters; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double h = average_entropy(model, data, mid);
    if (std::abs(h - target_entropy) < kTol) {
      return mid;
    }
    if (h < target_entropy) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  throw DomainError(
      "entropy_matched_temperature: no convergence after 200 bisection "
      "steps; the entropy plateaus near the target");
}

SoftOutputProfile soft_output_profile(const NetworkParams& model,
                                      const LabeledDataset& data,
                                      int class_of_interest,
                                      double temperature) {
  if (class_of_interest < 0 || class_of_interest >= data.num_classes) {
    throw DomainError("soft_output_profile: class out of range");
  }
  SoftOutputProfile profile;
  profile.class_of_interest = class_of_interest;
  profile.temperature = temperature;
  profile.mean_probs.assign(static_cast<std::size_t>(data.num_classes), 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] != class_of_interest) {
      continue;
    }
    const ForwardTrace trace = forward(model, data.inputs.row(i));
    const SoftDistribution p = tempered_softmax(trace.logits(), temperature);
    for (std::size_t c = 0; c < p.probs.size(); ++c) {
      profile.mean_probs[c] += p.probs[c];
    }
    ++count;
  }
  if (count == 0) {
    throw DomainError("soft_output_profile: class " +
                      std::to_string(class_of_interest) +
                      " has no samples in this split");
  }
  for (double& p : profile.mean_probs) {
    p /= static_cast<double>(count);
  }
  return profile;
}

std::size_t dominance_count(const SoftOutputProfile& profile, double factor) {
  if (!(factor >= 1.0)) {
    throw DomainError("dominance_count: factor must be >= 1");
  }
  const auto k_star = static_cast<std::size_t>(profile.class_of_interest);
  if (k_star >= profile.mean_probs.size() || profile.mean_probs.size() < 2) {
    throw DomainError("dominance_count: malformed profile");
  }
  double p2 = -1.0;
  for (std::size_t c = 0; c < profile.mean_probs.size(); ++c) {
    if (c != k_star) {
      p2 = std::max(p2, profile.mean_probs[c]);
    }
  }
  std::size_t count = 0;
  for (std::size_t c = 0; c < profile.mean_probs.size(); ++c) {
    if (c == k_star) {
      continue;
    }
    if (p2 >= factor * profile.mean_probs[c]) {
      ++count;
    }
  }
  return count;
}

void write_smoothness_csv(const SmoothnessReport& report,
                          const std::filesystem::path& path) {
  std::ofstream out = io::open_output(path, /*binary=*/false);
  out << "temperature,alpha,average_entropy\n";
  for (const SmoothnessRow& row : report) {
    out << io::format_double(row.temperature) << ','
        << io::format_double(row.alpha) << ','
        << io::format_double(row.average_entropy) << '\n';
  }
  if (!out) {
    throw IoError("write_smoothness_csv: write failed for " + path.string());
  }
}

void write_profile_csv(const SoftOutputProfile& profile,
                       const std::filesystem::path& path) {
  std::ofstream out = io::open_output(path, /*binary=*/false);
  out << "class_index,mean_prob\n";
  for (std::size_t c = 0; c < profile.mean_probs.size(); ++c) {
    out << c << ',' << io::format_double(profile.mean_probs[c]) << '\n';
  }
  if (!out) {
    throw IoError("write_profile_csv: write failed for " + path.string());
  }
}

}  // namespace dlab
