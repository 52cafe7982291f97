#include "iagnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "iagnn/errors.hpp"
#include "iagnn/rng.hpp"

namespace iagnn {

namespace {

bool split_line(const std::string& line, char sep, std::array<std::string, 4>& out) {
  std::size_t start = 0;
  for (int f = 0; f < 3; ++f) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) return false;
    out[f] = line.substr(start, pos - start);
    start = pos + 1;
  }
  out[3] = line.substr(start);
  if (!out[3].empty() && out[3].back() == '\r') out[3].pop_back();
  for (const auto& f : out)
    if (f.empty()) return false;
  return true;
}

bool parse_i64(const std::string& s, std::int64_t& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

bool parse_int(const std::string& s, int& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

}  // namespace

ParseResult parse_interactions(std::istream& in, char sep) {
  if (!in.good()) throw DataError("parse_interactions: unreadable input stream");
  ParseResult result;
  std::unordered_map<std::string, std::size_t> session_slot;
  std::vector<std::string> bad_samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    ++result.total_lines;
    std::array<std::string, 4> fields;
    std::int64_t ts = 0;
    if (!split_line(line, sep, fields) || !parse_i64(fields[3], ts)) {
      ++result.malformed;
      if (bad_samples.size() < 5) bad_samples.push_back(line);
      continue;
    }
    auto [it, inserted] = session_slot.try_emplace(fields[0], result.sessions.size());
    if (inserted) result.sessions.push_back(RawSession{fields[0], {}});
    result.sessions[it->second].events.push_back(RawEvent{fields[1], fields[2], ts});
  }
  if (in.bad()) throw DataError("parse_interactions: read failure");
  if (result.total_lines > 0 && result.malformed * 2 > result.total_lines) {
    std::string msg = "parse_interactions: " + std::to_string(result.malformed) + " of " +
                      std::to_string(result.total_lines) + " lines malformed; samples:";
    for (const auto& s : bad_samples) msg += "\n  " + s;
    throw DataError(msg);
  }
  // stable sort keeps input order for equal timestamps
  for (auto& s : result.sessions)
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });
  return result;
}

std::vector<RawSession> keep_recent_fraction(std::vector<RawSession> sessions, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw UsageError("fraction must be in (0, 1], got " + std::to_string(fraction));
  if (fraction == 1.0 || sessions.empty()) return sessions;
  std::vector<std::size_t> order(sessions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sessions[a].events.back().timestamp < sessions[b].events.back().timestamp;
  });
  const std::size_t keep =
      std::max<std::size_t>(1, static_cast<std::size_t>(fraction * sessions.size() + 0.5));
  std::vector<std::size_t> kept(order.end() - keep, order.end());
  std::sort(kept.begin(), kept.end());  // preserve original session order
  std::vector<RawSession> out;
  out.reserve(keep);
  for (std::size_t i : kept) out.push_back(std::move(sessions[i]));
  return out;
}

std::vector<RawSession> filter_to_fixpoint(std::vector<RawSession> sessions, int min_occurrence,
                                           int min_session_len, FilterStats* stats) {
  FilterStats local;
  const std::size_t initial_sessions = sessions.size();
  bool changed = true;
  while (changed) {
    changed = false;
    ++local.rounds;
    std::unordered_map<std::string, int> counts;
    for (const auto& s : sessions)
      for (const auto& e : s.events) ++counts[e.item];
    std::unordered_set<std::string> rare;
    for (const auto& [item, n] : counts)
      if (n < min_occurrence) rare.insert(item);
    if (!rare.empty()) {
      for (auto& s : sessions) {
        const auto old_size = s.events.size();
        std::erase_if(s.events, [&](const RawEvent& e) { return rare.contains(e.item); });
        if (s.events.size() != old_size) changed = true;
      }
      local.dropped_items += rare.size();
    }
    const auto old_count = sessions.size();
    std::erase_if(sessions, [&](const RawSession& s) {
      return static_cast<int>(s.events.size()) < min_session_len;
    });
    if (sessions.size() != old_count) changed = true;
  }
  local.dropped_sessions = initial_sessions - sessions.size();
  if (stats) {
    stats->dropped_items += local.dropped_items;
    stats->dropped_sessions += local.dropped_sessions;
    stats->rounds = local.rounds;
  }
  if (sessions.empty())
    throw DataError("filter_to_fixpoint: no sessions left (started with " +
                    std::to_string(initial_sessions) + ", dropped " +
                    std::to_string(local.dropped_items) + " items)");
  return sessions;
}

void canonicalize_categories(std::vector<RawSession>& sessions, FilterStats* stats) {
  std::unordered_map<std::string, std::string> canon;
  std::size_t conflicts = 0;
  for (auto& s : sessions) {
    for (auto& e : s.events) {
      auto [it, inserted] = canon.try_emplace(e.item, e.category);
      if (!inserted && it->second != e.category) {
        ++conflicts;
        e.category = it->second;
      }
    }
  }
  if (stats) stats->category_conflicts += conflicts;
}

std::vector<StringExample> augment_sessions(const std::vector<RawSession>& sessions,
                                            int max_prefix_len) {
  std::vector<StringExample> out;
  for (std::size_t si = 0; si < sessions.size(); ++si) {
    const auto& ev = sessions[si].events;
    for (std::size_t i = 1; i < ev.size(); ++i) {
      StringExample ex;
      ex.session_index = si;
      const std::size_t begin = i > static_cast<std::size_t>(max_prefix_len)
                                    ? i - static_cast<std::size_t>(max_prefix_len)
                                    : 0;
      for (std::size_t j = begin; j < i; ++j) {
        ex.prefix_items.push_back(ev[j].item);
        ex.prefix_categories.push_back(ev[j].category);
      }
      ex.label_item = ev[i].item;
      ex.target_category = ev[i].category;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

SplitIndices split_sessions(std::size_t n_sessions, std::array<int, 3> ratios,
                            std::uint64_t seed) {
  if (n_sessions < 10)
    throw DataError("split_sessions: need at least 10 sessions, got " +
                    std::to_string(n_sessions));
  std::vector<std::size_t> order(n_sessions);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  const double total = ratios[0] + ratios[1] + ratios[2];
  const auto n_train = static_cast<std::size_t>(n_sessions * (ratios[0] / total) + 0.5);
  const auto n_val = static_cast<std::size_t>(n_sessions * (ratios[1] / total) + 0.5);
  SplitIndices split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.val.assign(order.begin() + n_train, order.begin() + std::min(n_train + n_val, n_sessions));
  split.test.assign(order.begin() + std::min(n_train + n_val, n_sessions), order.end());
  return split;
}

Vocabulary Vocabulary::build(const std::vector<RawSession>& sessions,
                             const std::vector<std::size_t>& session_indices) {
  Vocabulary v;
  for (std::size_t si : session_indices) {
    for (const auto& e : sessions[si].events) {
      auto [cit, cnew] = v.category_to_index.try_emplace(e.category, v.n_categories());
      if (cnew) v.categories.push_back(e.category);
      auto [iit, inew] = v.item_to_index.try_emplace(e.item, v.n_items());
      if (inew) {
        v.items.push_back(e.item);
        v.item_category.push_back(cit->second);
      }
    }
  }
  v.candidates_by_category.assign(v.n_categories(), {});
  for (int i = 0; i < v.n_items(); ++i) v.candidates_by_category[v.item_category[i]].push_back(i);
  // item indices were assigned in increasing order, so each list is ascending
  return v;
}

IndexResult index_examples(const std::vector<StringExample>& raw, const Vocabulary& vocab) {
  IndexResult result;
  for (const auto& sx : raw) {
    Example ex;
    bool ok = true;
    for (const auto& it : sx.prefix_items) {
      auto f = vocab.item_to_index.find(it);
      if (f == vocab.item_to_index.end()) {
        ok = false;
        break;
      }
      ex.prefix_items.push_back(f->second);
      ex.prefix_categories.push_back(vocab.item_category[f->second]);
    }
    const auto lf = vocab.item_to_index.find(sx.label_item);
    if (ok && lf != vocab.item_to_index.end()) {
      ex.label_item = lf->second;
      ex.target_category = vocab.item_category[lf->second];
      result.examples.push_back(std::move(ex));
    } else {
      ++result.dropped_oov;
    }
  }
  return result;
}

CorpusStats corpus_stats(const std::vector<RawSession>& sessions) {
  CorpusStats st;
  st.n_sessions = sessions.size();
  std::unordered_set<std::string> items, cats;
  std::size_t cat_sum = 0;
  for (const auto& s : sessions) {
    st.n_events += s.events.size();
    std::unordered_set<std::string> session_cats;
    for (const auto& e : s.events) {
      items.insert(e.item);
      cats.insert(e.category);
      session_cats.insert(e.category);
    }
    cat_sum += session_cats.size();
  }
  st.n_items = items.size();
  st.n_categories = cats.size();
  if (!sessions.empty()) {
    st.avg_session_len = static_cast<double>(st.n_events) / sessions.size();
    st.avg_categories_per_session = static_cast<double>(cat_sum) / sessions.size();
  }
  return st;
}

void write_examples(const std::string& path, const std::vector<Example>& examples, int n_items,
                    int n_categories) {
  std::ofstream out(path);
  if (!out) throw DataError("write_examples: cannot open " + path);
  out << "IAGNN-EX v1 " << n_items << " " << n_categories << "\n";
  for (const auto& ex : examples) {
    for (std::size_t i = 0; i < ex.prefix_items.size(); ++i)
      out << (i ? " " : "") << ex.prefix_items[i];
    out << "|";
    for (std::size_t i = 0; i < ex.prefix_categories.size(); ++i)
      out << (i ? " " : "") << ex.prefix_categories[i];
    out << "|" << ex.target_category << "|" << ex.label_item << "\n";
  }
  if (!out) throw DataError("write_examples: write failure on " + path);
}

namespace {

std::vector<int> parse_int_list(const std::string& s, const std::string& path, std::size_t lineno) {
  std::vector<int> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) {
    int v = 0;
    if (!parse_int(tok, v))
      throw DataError(path + ":" + std::to_string(lineno) + ": corrupted record field '" + tok +
                      "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::vector<Example> read_examples(const std::string& path, int* n_items, int* n_categories) {
  std::ifstream in(path);
  if (!in) throw DataError("read_examples: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw DataError("read_examples: empty file " + path);
  std::istringstream hs(header);
  std::string magic, version;
  int ni = 0, nc = 0;
  hs >> magic >> version >> ni >> nc;
  if (magic != "IAGNN-EX" || version != "v1" || hs.fail())
    throw DataError("read_examples: version mismatch in header of " + path + ": '" + header + "'");
  if (n_items) *n_items = ni;
  if (n_categories) *n_categories = nc;

  std::vector<Example> examples;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<std::string, 4> fields;
    std::size_t start = 0;
    for (int f = 0; f < 3; ++f) {
      const std::size_t pos = line.find('|', start);
      if (pos == std::string::npos)
        throw DataError(path + ":" + std::to_string(lineno) + ": corrupted record line");
      fields[f] = line.substr(start, pos - start);
      start = pos + 1;
    }
    fields[3] = line.substr(start);
    Example ex;
    ex.prefix_items = parse_int_list(fields[0], path, lineno);
    ex.prefix_categories = parse_int_list(fields[1], path, lineno);
    if (!parse_int(fields[2], ex.target_category) || !parse_int(fields[3], ex.label_item))
      throw DataError(path + ":" + std::to_string(lineno) + ": corrupted record line");
    if (ex.prefix_items.empty() || ex.prefix_items.size() != ex.prefix_categories.size())
      throw DataError(path + ":" + std::to_string(lineno) + ": prefix fields disagree");
    examples.push_back(std::move(ex));
  }
  return examples;
}

void write_vocabulary(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw DataError("write_vocabulary: cannot open " + path);
  for (int c = 0; c < vocab.n_categories(); ++c) out << "cat " << c << " " << vocab.categories[c] << "\n";
  for (int i = 0; i < vocab.n_items(); ++i)
    out << "item " << i << " " << vocab.items[i] << " " << vocab.item_category[i] << "\n";
  if (!out) throw DataError("write_vocabulary: write failure on " + path);
}

Vocabulary read_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_vocabulary: cannot open " + path);
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream iss(line);
    std::string kind, id;
    int index = 0;
    iss >> kind >> index >> id;
    if (kind == "cat") {
      if (iss.fail() || index != v.n_categories())
        throw DataError(path + ":" + std::to_string(lineno) + ": bad category record");
      v.categories.push_back(id);
      v.category_to_index.emplace(id, index);
    } else if (kind == "item") {
      int cat = -1;
      iss >> cat;
      if (iss.fail() || index != v.n_items() || cat < 0 || cat >= v.n_categories())
        throw DataError(path + ":" + std::to_string(lineno) + ": bad item record");
      v.items.push_back(id);
      v.item_to_index.emplace(id, index);
      v.item_category.push_back(cat);
    } else {
      throw DataError(path + ":" + std::to_string(lineno) + ": unknown record '" + kind + "'");
    }
  }
  v.candidates_by_category.assign(v.n_categories(), {});
  for (int i = 0; i < v.n_items(); ++i) v.candidates_by_category[v.item_category[i]].push_back(i);
  return v;
}

}  // namespace iagnn
