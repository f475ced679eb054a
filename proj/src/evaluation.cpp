#include "cssim/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "cssim/errors.hpp"
#include "cssim/random.hpp"
#include "parallel.hpp"

namespace cssim {

PredictionVector predict_model(const ModelParams& params, std::span<const ContextTriplet> triplets,
                               const EmbeddingStore& store, int threads) {
  PredictionVector out(triplets.size());
  detail::parallel_for(triplets.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int k = predict_oddball(triplet_probs(params, store, triplets[i]));
      out[i] = {i, k, k == triplets[i].oddball_index};
    }
  });
  return out;
}

PredictionVector predict_baseline(const EmbeddingStore& store, std::span<const ContextTriplet> triplets,
                                  BaselineMode mode, const ModelParams* params) {
  PredictionVector out;
  out.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const int k = baseline_predict(store, triplets[i], mode, params);
    out.push_back({i, k, k == triplets[i].oddball_index});
  }
  return out;
}

double accuracy(const PredictionVector& preds) {
  if (preds.empty()) throw ValidationError("accuracy of an empty prediction vector");
  const auto correct = std::count_if(preds.begin(), preds.end(), [](const Prediction& p) { return p.correct; });
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::string format_predictions_csv(const PredictionVector& preds) {
  std::string out = "triplet_index,predicted,correct\n";
  for (const auto& p : preds) out += fmt::format("{},{},{}\n", p.triplet_index, p.predicted, p.correct ? 1 : 0);
  return out;
}

PredictionVector parse_predictions_csv(std::string_view text) {
  PredictionVector out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.rfind("triplet_index", 0) == 0)) continue;
    Prediction p;
    int correct = 0;
    char c1 = 0, c2 = 0;
    std::istringstream fields(line);
    if (!(fields >> p.triplet_index >> c1 >> p.predicted >> c2 >> correct) || c1 != ',' || c2 != ',' ||
        p.predicted < 0 || p.predicted > 2 || (correct != 0 && correct != 1)) {
      throw FormatError("predictions line " + std::to_string(line_no) + ": malformed row '" + line + "'");
    }
    p.correct = correct == 1;
    out.push_back(p);
  }
  return out;
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("percentile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BootstrapResult paired_bootstrap(const PredictionVector& a, const PredictionVector& b, int n_boot, double alpha,
                                 std::uint64_t seed, int threads) {
  if (a.empty() || a.size() != b.size()) {
    throw ValidationError("paired bootstrap needs two nonempty prediction vectors of equal length");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].triplet_index != b[i].triplet_index) {
      throw ValidationError("prediction vectors are not aligned at position " + std::to_string(i));
    }
  }
  if (n_boot < 1) throw ValidationError("n_boot must be >= 1");
  if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha must lie in (0, 1)");

  const std::size_t n = a.size();
  // Per-trial difference in correctness, in {-1, 0, 1}.
  std::vector<int> diff(n);
  long long observed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = static_cast<int>(b[i].correct) - static_cast<int>(a[i].correct);
    observed += diff[i];
  }

  std::vector<double> deltas(static_cast<std::size_t>(n_boot));
  detail::parallel_for(deltas.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t rep = begin; rep < end; ++rep) {
      auto rng = make_rng(seed, rep);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      long long total = 0;
      for (std::size_t i = 0; i < n; ++i) total += diff[pick(rng)];
      deltas[rep] = static_cast<double>(total) / static_cast<double>(n);
    }
  });

  BootstrapResult out;
  out.n_boot = n_boot;
  out.seed = seed;
  out.alpha = alpha;
  out.observed_delta = static_cast<double>(observed) / static_cast<double>(n);
  double sum = 0.0;
  for (double v : deltas) sum += v;
  out.delta_mean = sum / static_cast<double>(n_boot);
  std::sort(deltas.begin(), deltas.end());
  out.ci_low = percentile(deltas, alpha / 2);
  out.ci_high = percentile(deltas, 1 - alpha / 2);
  return out;
}

std::string format_delta(const BootstrapResult& r, int decimals) {
  return fmt::format("Δ = {:.{}f} [{:.{}f}, {:.{}f}]", r.delta_mean, decimals, r.ci_low, decimals, r.ci_high,
                     decimals);
}

std::array<double, 3> ClassTrialGroup::distribution() const {
  const double total = static_cast<double>(responses());
  return {counts[0] / total, counts[1] / total, counts[2] / total};
}

std::vector<ClassTrialGroup> group_by_class(std::span<const ContextTriplet> triplets, const ClassMap& classes) {
  auto label = [&](ImageId id) {
    auto it = classes.find(id);
    if (it == classes.end()) throw LookupError("image id " + std::to_string(id) + " missing from class map");
    return it->second;
  };
  std::map<ClassTrialKey, std::array<std::size_t, 3>> groups;
  for (const auto& t : triplets) {
    ClassTrialKey key;
    key.context_class = label(t.context_id);
    for (std::size_t i = 0; i < 3; ++i) key.triplet_classes[i] = label(t.image_ids[i]);
    std::sort(key.triplet_classes.begin(), key.triplet_classes.end());
    const auto odd = label(t.oddball());
    // First matching position; only ambiguous when classes collide.
    const auto pos = static_cast<std::size_t>(
        std::find(key.triplet_classes.begin(), key.triplet_classes.end(), odd) - key.triplet_classes.begin());
    ++groups[key][pos];
  }
  std::vector<ClassTrialGroup> out;
  out.reserve(groups.size());
  for (const auto& [key, counts] : groups) out.push_back({key, counts});
  return out;
}

UpperBoundResult upper_bound(std::span<const ContextTriplet> triplets, const ClassMap& classes) {
  UpperBoundResult out;
  const auto groups = group_by_class(triplets, classes);
  out.groups_total = groups.size();
  double group_sum = 0.0, weighted_sum = 0.0;
  for (const auto& g : groups) {
    const auto n = g.responses();
    if (n < 2) continue;
    const auto p = g.distribution();
    const double top = std::max({p[0], p[1], p[2]});
    group_sum += top;
    weighted_sum += top * static_cast<double>(n);
    ++out.groups_retained;
    out.responses_retained += n;
  }
  if (out.groups_retained > 0) {
    out.group_mean = group_sum / static_cast<double>(out.groups_retained);
    out.response_mean = weighted_sum / static_cast<double>(out.responses_retained);
  }
  return out;
}

}  // namespace cssim
