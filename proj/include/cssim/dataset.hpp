#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cssim/linalg.hpp"

namespace cssim {

/// One 8-choose-2 judgment: the participant picked the two references most
/// similar to the central query image.
struct TrialRecord {
  std::uint64_t trial_id = 0;
  std::uint64_t participant_id = 0;
  ImageId query_id = 0;
  std::array<ImageId, 8> reference_ids{};
  std::array<ImageId, 2> selected_ids{};

  /// Throws ValidationError naming the violated invariant.
  void validate() const;
};

enum class Split { kTrain, kVal, kTest, kNone };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// A triplet-with-context trial derived from a TrialRecord.
struct ContextTriplet {
  ImageId context_id = 0;
  std::array<ImageId, 3> image_ids{};
  int oddball_index = 0;
  std::uint64_t source_trial_id = 0;
  std::uint64_t participant_id = 0;
  Split split = Split::kNone;

  void validate() const;
  ImageId oddball() const { return image_ids[static_cast<std::size_t>(oddball_index)]; }

  friend bool operator==(const ContextTriplet&, const ContextTriplet&) = default;
};

using ClassMap = std::unordered_map<ImageId, std::int64_t>;
using SplitAssignment = std::map<std::uint64_t, Split>;

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// --- file formats -----------------------------------------------------------

/// Line-delimited JSON; each line holds trial_id, participant_id, query_id,
/// reference_ids[8], selected_ids[2]. Blank lines are skipped. Errors carry
/// the 1-based line number.
std::vector<TrialRecord> parse_trials(const std::filesystem::path& path);
std::vector<TrialRecord> parse_trials_text(std::string_view text);
std::string format_trials(std::span<const TrialRecord> trials);

std::vector<ContextTriplet> parse_triplets(const std::filesystem::path& path);
std::vector<ContextTriplet> parse_triplets_text(std::string_view text);
std::string format_triplets(std::span<const ContextTriplet> triplets);
void write_triplets(std::span<const ContextTriplet> triplets, const std::filesystem::path& path);

/// JSON object mapping ID strings to integer class labels.
ClassMap load_class_map(const std::filesystem::path& path);
std::string format_class_map(const ClassMap& classes);

// --- construction -----------------------------------------------------------

/// Six triplets: both selected images plus each unselected reference in turn,
/// in canonical order (selected, selected, unselected) with the unselected
/// image as oddball.
std::vector<ContextTriplet> expand_to_triplets(const TrialRecord& trial);

/// Reorders a triplet's images by `order` (a permutation of {0,1,2}); the
/// oddball index follows its image.
ContextTriplet permute_triplet(const ContextTriplet& t, const std::array<int, 3>& order);

/// Applies an independent uniformly random permutation to each triplet.
std::vector<ContextTriplet> shuffle_triplet_order(std::span<const ContextTriplet> triplets,
                                                  std::uint64_t seed);

/// Keeps triplets whose three image classes are pairwise distinct. The context
/// image is not considered. Throws LookupError for unmapped images.
std::vector<ContextTriplet> filter_class_collisions(std::span<const ContextTriplet> triplets,
                                                    const ClassMap& classes);

struct TrialKey {
  std::uint64_t trial_id = 0;
  std::uint64_t participant_id = 0;
};

/// Participant-stratified split at the trial level. For a participant with n
/// trials the split sizes are floor(n * ratio) with leftover trials given to
/// train, then val, then test; which trials land where is decided by a shuffle
/// seeded from (seed, participant_id), so the result does not depend on input
/// order.
SplitAssignment stratified_split(std::span<const TrialKey> trials, const SplitRatios& ratios,
                                 std::uint64_t seed);
SplitAssignment stratified_split(std::span<const TrialRecord> trials, const SplitRatios& ratios,
                                 std::uint64_t seed);

/// Tags each triplet with the split of its source trial. Throws
/// ValidationError for triplets whose source trial is unassigned.
void assign_splits(std::span<ContextTriplet> triplets, const SplitAssignment& splits);

std::vector<ContextTriplet> select_split(std::span<const ContextTriplet> triplets, Split split);

}  // namespace cssim
