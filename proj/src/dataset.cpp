#include "cssim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cssim/config.hpp"
#include "cssim/errors.hpp"
#include "cssim/io.hpp"
#include "cssim/random.hpp"

namespace cssim {

using nlohmann::json;

void TrialRecord::validate() const {
  const std::set<ImageId> refs(reference_ids.begin(), reference_ids.end());
  if (refs.size() != reference_ids.size()) {
    throw ValidationError("trial " + std::to_string(trial_id) + ": reference_ids are not distinct");
  }
  if (refs.count(query_id)) {
    throw ValidationError("trial " + std::to_string(trial_id) + ": query_id appears among reference_ids");
  }
  if (selected_ids[0] == selected_ids[1]) {
    throw ValidationError("trial " + std::to_string(trial_id) + ": selected_ids are not distinct");
  }
  for (auto s : selected_ids) {
    if (!refs.count(s)) {
      throw ValidationError("trial " + std::to_string(trial_id) + ": selected id " +
                            std::to_string(s) + " is not a reference");
    }
  }
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kNone: return "none";
  }
  return "none";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name == "none") return Split::kNone;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

void ContextTriplet::validate() const {
  if (oddball_index < 0 || oddball_index > 2) {
    throw ValidationError("oddball_index " + std::to_string(oddball_index) + " out of range");
  }
  if (image_ids[0] == image_ids[1] || image_ids[0] == image_ids[2] || image_ids[1] == image_ids[2]) {
    throw ValidationError("triplet image ids are not distinct");
  }
}

namespace {

template <std::size_t N>
std::array<ImageId, N> id_array(const json& j, const char* key) {
  const auto& arr = j.at(key);
  if (!arr.is_array() || arr.size() != N) {
    throw ValidationError(std::string(key) + " must be an array of " + std::to_string(N) + " ids");
  }
  std::array<ImageId, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = arr[i].get<ImageId>();
  return out;
}

template <typename Record, typename Fn>
std::vector<Record> parse_lines(std::string_view text, Fn&& parse_one) {
  std::vector<Record> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(parse_one(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<TrialRecord> parse_trials_text(std::string_view text) {
  return parse_lines<TrialRecord>(text, [](const json& j) {
    TrialRecord t;
    t.trial_id = j.at("trial_id").get<std::uint64_t>();
    t.participant_id = j.at("participant_id").get<std::uint64_t>();
    t.query_id = j.at("query_id").get<ImageId>();
    t.reference_ids = id_array<8>(j, "reference_ids");
    t.selected_ids = id_array<2>(j, "selected_ids");
    t.validate();
    return t;
  });
}

std::vector<TrialRecord> parse_trials(const std::filesystem::path& path) {
  try {
    return parse_trials_text(io::read_file(path));
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    // Keep the error kind, prefix the file.
    if (e.kind() == ErrorKind::kFormat) throw FormatError(path.string() + ": " + e.what());
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string format_trials(std::span<const TrialRecord> trials) {
  std::string out;
  for (const auto& t : trials) {
    json j;
    j["trial_id"] = t.trial_id;
    j["participant_id"] = t.participant_id;
    j["query_id"] = t.query_id;
    j["reference_ids"] = t.reference_ids;
    j["selected_ids"] = t.selected_ids;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<ContextTriplet> parse_triplets_text(std::string_view text) {
  return parse_lines<ContextTriplet>(text, [](const json& j) {
    ContextTriplet t;
    t.context_id = j.at("context_id").get<ImageId>();
    t.image_ids = id_array<3>(j, "image_ids");
    t.oddball_index = j.at("oddball_index").get<int>();
    t.source_trial_id = j.at("source_trial_id").get<std::uint64_t>();
    t.participant_id = j.at("participant_id").get<std::uint64_t>();
    t.split = j.contains("split") ? parse_split(j.at("split").get<std::string>()) : Split::kNone;
    t.validate();
    return t;
  });
}

std::vector<ContextTriplet> parse_triplets(const std::filesystem::path& path) {
  try {
    return parse_triplets_text(io::read_file(path));
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kFormat) throw FormatError(path.string() + ": " + e.what());
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string format_triplets(std::span<const ContextTriplet> triplets) {
  std::string out;
  for (const auto& t : triplets) {
    json j;
    j["context_id"] = t.context_id;
    j["image_ids"] = t.image_ids;
    j["oddball_index"] = t.oddball_index;
    j["source_trial_id"] = t.source_trial_id;
    j["participant_id"] = t.participant_id;
    j["split"] = std::string(to_string(t.split));
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_triplets(std::span<const ContextTriplet> triplets, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_triplets(triplets));
}

ClassMap load_class_map(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError(path.string() + ": class map must be a JSON object");
  ClassMap classes;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number_integer()) {
      throw FormatError(path.string() + ": label for id " + key + " is not an integer");
    }
    std::size_t used = 0;
    ImageId id = 0;
    try {
      id = std::stoull(key, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != key.size()) throw FormatError(path.string() + ": key '" + key + "' is not an image id");
    classes.emplace(id, value.get<std::int64_t>());
  }
  return classes;
}

std::string format_class_map(const ClassMap& classes) {
  // Sorted keys for byte-stable output.
  std::map<ImageId, std::int64_t> sorted(classes.begin(), classes.end());
  json j = json::object();
  for (const auto& [id, label] : sorted) j[std::to_string(id)] = label;
  return j.dump() + "\n";
}

std::vector<ContextTriplet> expand_to_triplets(const TrialRecord& trial) {
  std::vector<ContextTriplet> out;
  out.reserve(6);
  for (auto ref : trial.reference_ids) {
    if (ref == trial.selected_ids[0] || ref == trial.selected_ids[1]) continue;
    ContextTriplet t;
    t.context_id = trial.query_id;
    t.image_ids = {trial.selected_ids[0], trial.selected_ids[1], ref};
    t.oddball_index = 2;
    t.source_trial_id = trial.trial_id;
    t.participant_id = trial.participant_id;
    out.push_back(t);
  }
  return out;
}

ContextTriplet permute_triplet(const ContextTriplet& t, const std::array<int, 3>& order) {
  ContextTriplet out = t;
  for (int pos = 0; pos < 3; ++pos) {
    const int src = order[static_cast<std::size_t>(pos)];
    out.image_ids[static_cast<std::size_t>(pos)] = t.image_ids[static_cast<std::size_t>(src)];
    if (src == t.oddball_index) out.oddball_index = pos;
  }
  return out;
}

std::vector<ContextTriplet> shuffle_triplet_order(std::span<const ContextTriplet> triplets,
                                                  std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::vector<ContextTriplet> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) {
    std::array<int, 3> order{0, 1, 2};
    std::shuffle(order.begin(), order.end(), rng);
    out.push_back(permute_triplet(t, order));
  }
  return out;
}

std::vector<ContextTriplet> filter_class_collisions(std::span<const ContextTriplet> triplets,
                                                    const ClassMap& classes) {
  auto label = [&](ImageId id) {
    auto it = classes.find(id);
    if (it == classes.end()) throw LookupError("image id " + std::to_string(id) + " missing from class map");
    return it->second;
  };
  std::vector<ContextTriplet> kept;
  kept.reserve(triplets.size());
  for (const auto& t : triplets) {
    const auto a = label(t.image_ids[0]), b = label(t.image_ids[1]), c = label(t.image_ids[2]);
    if (a != b && a != c && b != c) kept.push_back(t);
  }
  return kept;
}

SplitAssignment stratified_split(std::span<const TrialKey> trials, const SplitRatios& ratios,
                                 std::uint64_t seed) {
  if (trials.empty()) throw ValidationError("cannot split an empty trial list");
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > kTolerances.ratio_sum) {
    throw ValidationError("split ratios must be positive and sum to 1");
  }
  std::map<std::uint64_t, std::vector<std::uint64_t>> by_participant;
  std::set<std::uint64_t> seen;
  for (const auto& t : trials) {
    if (!seen.insert(t.trial_id).second) {
      throw ValidationError("duplicate trial_id " + std::to_string(t.trial_id));
    }
    by_participant[t.participant_id].push_back(t.trial_id);
  }

  SplitAssignment out;
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  constexpr std::array<Split, 3> tags{Split::kTrain, Split::kVal, Split::kTest};
  for (auto& [participant, ids] : by_participant) {
    std::sort(ids.begin(), ids.end());
    auto rng = make_rng(seed, participant);
    std::shuffle(ids.begin(), ids.end(), rng);

    const auto n = ids.size();
    std::array<std::size_t, 3> counts{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      // Slack absorbs products like 0.29 * 100 = 28.999999999999996.
      counts[k] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r[k] + 1e-9));
      assigned += counts[k];
    }
    for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++counts[k];

    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < counts[k]; ++i) out.emplace(ids[pos++], tags[k]);
    }
  }
  return out;
}

SplitAssignment stratified_split(std::span<const TrialRecord> trials, const SplitRatios& ratios,
                                 std::uint64_t seed) {
  std::vector<TrialKey> keys;
  keys.reserve(trials.size());
  for (const auto& t : trials) keys.push_back({t.trial_id, t.participant_id});
  return stratified_split(std::span<const TrialKey>(keys), ratios, seed);
}

void assign_splits(std::span<ContextTriplet> triplets, const SplitAssignment& splits) {
  for (auto& t : triplets) {
    auto it = splits.find(t.source_trial_id);
    if (it == splits.end()) {
      throw ValidationError("trial " + std::to_string(t.source_trial_id) + " has no split assignment");
    }
    t.split = it->second;
  }
}

std::vector<ContextTriplet> select_split(std::span<const ContextTriplet> triplets, Split split) {
  std::vector<ContextTriplet> out;
  for (const auto& t : triplets) {
    if (t.split == split) out.push_back(t);
  }
  return out;
}

}  // namespace cssim
