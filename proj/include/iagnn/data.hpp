#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace iagnn {

struct RawEvent {
  std::string item;
  std::string category;
  std::int64_t timestamp = 0;
};

struct RawSession {
  std::string session_id;
  std::vector<RawEvent> events;  // sorted by timestamp, ties by input order
};

struct ParseResult {
  std::vector<RawSession> sessions;  // in order of first appearance
  std::size_t malformed = 0;
  std::size_t total_lines = 0;
};

// Lines are session_id<sep>item_id<sep>category_id<sep>timestamp. Malformed
// lines are counted and skipped; more than half malformed is fatal.
ParseResult parse_interactions(std::istream& in, char sep);

// Keeps the most recent `fraction` of sessions ordered by last event time
// (ties by input order). fraction in (0, 1]; 1 keeps everything.
std::vector<RawSession> keep_recent_fraction(std::vector<RawSession> sessions, double fraction);

struct FilterStats {
  std::size_t dropped_items = 0;
  std::size_t dropped_sessions = 0;
  std::size_t rounds = 0;
  std::size_t category_conflicts = 0;
};

// Iterates (drop items with corpus occurrence < min_occurrence, drop sessions
// shorter than min_session_len) to a fixpoint. Empty result is fatal.
std::vector<RawSession> filter_to_fixpoint(std::vector<RawSession> sessions, int min_occurrence,
                                           int min_session_len, FilterStats* stats = nullptr);

// Rewrites every event's category to the item's first-seen category so each
// item maps to exactly one category downstream. Conflicts counted.
void canonicalize_categories(std::vector<RawSession>& sessions, FilterStats* stats = nullptr);

// Pre-vocabulary training instance carrying its source session for
// session-level splitting.
struct StringExample {
  std::size_t session_index = 0;
  std::vector<std::string> prefix_items;
  std::vector<std::string> prefix_categories;
  std::string target_category;
  std::string label_item;
};

// For each session of length m emits m-1 examples: prefix = events before i,
// label = item i, target category = category of item i. Prefixes keep at most
// max_prefix_len most recent events.
std::vector<StringExample> augment_sessions(const std::vector<RawSession>& sessions,
                                            int max_prefix_len = 50);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;  // session indices
};

// Deterministic seeded shuffle of session indices, then contiguous split by
// the given ratios. Fewer than 10 sessions is fatal.
SplitIndices split_sessions(std::size_t n_sessions, std::array<int, 3> ratios,
                            std::uint64_t seed);

struct Vocabulary {
  std::vector<std::string> items;       // index -> id string
  std::vector<std::string> categories;  // index -> id string
  std::unordered_map<std::string, int> item_to_index;
  std::unordered_map<std::string, int> category_to_index;
  std::vector<int> item_category;                      // item index -> category index
  std::vector<std::vector<int>> candidates_by_category;  // ascending item indices

  int n_items() const { return static_cast<int>(items.size()); }
  int n_categories() const { return static_cast<int>(categories.size()); }

  // Indices assigned in order of first occurrence over the given sessions.
  static Vocabulary build(const std::vector<RawSession>& sessions,
                          const std::vector<std::size_t>& session_indices);
};

struct Example {
  std::vector<int> prefix_items;
  std::vector<int> prefix_categories;
  int target_category = -1;
  int label_item = -1;
};

struct IndexResult {
  std::vector<Example> examples;
  std::size_t dropped_oov = 0;  // examples with any out-of-vocabulary id
};

IndexResult index_examples(const std::vector<StringExample>& raw, const Vocabulary& vocab);

struct CorpusStats {
  std::size_t n_sessions = 0;
  std::size_t n_items = 0;
  std::size_t n_categories = 0;
  std::size_t n_events = 0;
  double avg_session_len = 0.0;
  double avg_categories_per_session = 0.0;
};

CorpusStats corpus_stats(const std::vector<RawSession>& sessions);

// Examples file: header "IAGNN-EX v1 <n_items> <n_categories>", then one
// record per line "prefix_items|prefix_categories|target_category|label_item"
// with space-separated indices inside each field.
void write_examples(const std::string& path, const std::vector<Example>& examples, int n_items,
                    int n_categories);
std::vector<Example> read_examples(const std::string& path, int* n_items = nullptr,
                                   int* n_categories = nullptr);

// Vocabulary sidecar: "item <index> <id> <category_index>" and
// "cat <index> <id>" lines.
void write_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::string& path);

}  // namespace iagnn
