#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cssim/dataset.hpp"
#include "cssim/embedding_store.hpp"
#include "cssim/model.hpp"

namespace cssim {

struct Prediction {
  std::uint64_t triplet_index = 0;
  int predicted = 0;
  bool correct = false;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Aligned 1:1 with an evaluation triplet list.
using PredictionVector = std::vector<Prediction>;

PredictionVector predict_model(const ModelParams& params, std::span<const ContextTriplet> triplets,
                               const EmbeddingStore& store, int threads = 1);
PredictionVector predict_baseline(const EmbeddingStore& store, std::span<const ContextTriplet> triplets,
                                  BaselineMode mode, const ModelParams* params = nullptr);

/// Fraction correct. Throws ValidationError when empty.
double accuracy(const PredictionVector& preds);

/// CSV: triplet_index,predicted,correct
std::string format_predictions_csv(const PredictionVector& preds);
PredictionVector parse_predictions_csv(std::string_view text);

struct BootstrapResult {
  double delta_mean = 0.0;  // mean over resamples of acc_b - acc_a
  double ci_low = 0.0;
  double ci_high = 0.0;
  int n_boot = 0;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  double observed_delta = 0.0;  // acc_b - acc_a on the full set
};

/// Paired percentile bootstrap of acc(b) - acc(a). Resample i draws trial
/// indices from make_rng(seed, i), so any thread count gives the same result.
/// Throws ValidationError when the vectors are empty or not aligned.
BootstrapResult paired_bootstrap(const PredictionVector& a, const PredictionVector& b, int n_boot = 10000,
                                 double alpha = 0.05, std::uint64_t seed = 0, int threads = 1);

/// "Δ = 0.054 [0.052, 0.057]"
std::string format_delta(const BootstrapResult& r, int decimals = 3);

/// Percentile with linear interpolation between order statistics.
double percentile(std::span<const double> sorted, double q);

struct UpperBoundResult {
  std::optional<double> group_mean;     // primary: unweighted mean of max_i p_i over groups
  std::optional<double> response_mean;  // the same, weighted by group response count
  std::size_t groups_total = 0;
  std::size_t groups_retained = 0;  // groups with >= 2 responses
  std::size_t responses_retained = 0;

  bool defined() const { return group_mean.has_value(); }
};

/// Class-level trial key: (context class, sorted triplet classes). Each
/// response is mapped to the position of its oddball's class in the sorted
/// list. Throws LookupError for unmapped images.
struct ClassTrialKey {
  std::int64_t context_class = 0;
  std::array<std::int64_t, 3> triplet_classes{};
  auto operator<=>(const ClassTrialKey&) const = default;
};

struct ClassTrialGroup {
  ClassTrialKey key;
  std::array<std::size_t, 3> counts{};

  std::size_t responses() const { return counts[0] + counts[1] + counts[2]; }
  std::array<double, 3> distribution() const;
};

std::vector<ClassTrialGroup> group_by_class(std::span<const ContextTriplet> triplets, const ClassMap& classes);

UpperBoundResult upper_bound(std::span<const ContextTriplet> triplets, const ClassMap& classes);

}  // namespace cssim
