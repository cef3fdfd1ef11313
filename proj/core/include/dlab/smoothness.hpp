#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "dlab/dataset.hpp"
#include "dlab/nn.hpp"
#include "dlab/objectives.hpp"

namespace dlab {

/// Mean soft output of a model over the samples of one class, at one
/// temperature.
struct SoftOutputProfile {
  int class_of_interest = 0;
  std::vector<double> mean_probs;
  double temperature = 1.0;
};

struct SmoothnessRow {
  double temperature = 1.0;
  double alpha = 0.0;
  double average_entropy = 0.0;
};
using SmoothnessReport = std::vector<SmoothnessRow>;

/// Shannon entropy in nats, with 0 * log 0 = 0. Maximal (log K) exactly for
/// the uniform distribution.
double entropy(const SoftDistribution& dist);

/// Mean entropy of the model's tempered soft outputs over the dataset.
/// Non-decreasing in the temperature.
double average_entropy(const NetworkParams& model, const LabeledDataset& data,
                       double temperature);

/// Bisection for the temperature at which average_entropy hits
/// target_entropy, to |average_entropy(T) - target| < 1e-6. The bracket must
/// contain the target and be ordered; monotonicity is checked on the
/// endpoints first.
double entropy_matched_temperature(const NetworkParams& model,
                                   const LabeledDataset& data,
                                   double target_entropy,
                                   std::pair<double, double> bracket);

SoftOutputProfile soft_output_profile(const NetworkParams& model,
                                      const LabeledDataset& data,
                                      int class_of_interest,
                                      double temperature);

/// Number of incorrect classes m whose mean probability is dominated by the
/// largest incorrect one: p2 >= factor * mean_probs[m].
std::size_t dominance_count(const SoftOutputProfile& profile, double factor);

/// CSV with header temperature,alpha,average_entropy.
void write_smoothness_csv(const SmoothnessReport& report,
                          const std::filesystem::path& path);

/// CSV with header class_index,mean_prob.
void write_profile_csv(const SoftOutputProfile& profile,
                       const std::filesystem::path& path);

}  // namespace dlab
