#pragma once

// Corpus ingestion: tokenizer, role vocabularies, sparse count matrices
// (statuses M, interaction text P, interactor content W), the interaction
// event log, and one chronological timeline per labeled candidate user.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftcast/common.hpp"
#include "driftcast/sparse.hpp"

namespace driftcast {

/// Users keep at most this many prior statuses (the most recent ones).
inline constexpr std::size_t kMaxStatusesPerUser = 200;

// ---------------------------------------------------------------------------
// Tokenizer

/// Lowercases, drops whitespace-delimited chunks starting with "http", splits
/// on runs of non-alphanumeric characters and drops tokens shorter than
/// `min_len`. Bytes >= 0x80 count as word characters so UTF-8 words survive.
inline std::vector<std::string> tokenize(std::string_view text, std::size_t min_len = 2) {
  std::vector<std::string> out;
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto is_word = [](unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; };

  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t end = i;
    while (end < text.size() && !is_space(static_cast<unsigned char>(text[end]))) ++end;
    std::string_view chunk = text.substr(i, end - i);
    i = end;
    if (chunk.empty()) continue;
    if (chunk.size() >= 4) {
      std::string head(chunk.substr(0, 4));
      for (auto& c : head) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (head == "http") continue;
    }
    std::string cur;
    auto flush = [&] {
      if (cur.size() >= min_len && cur.size() > 0) out.push_back(cur);
      cur.clear();
    };
    for (char ch : chunk) {
      auto c = static_cast<unsigned char>(ch);
      if (is_word(c)) {
        cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
      } else {
        flush();
      }
    }
    flush();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

enum class VocabRole { status, interaction, interactor };

inline std::string_view role_name(VocabRole r) {
  switch (r) {
    case VocabRole::status: return "status";
    case VocabRole::interaction: return "interaction";
    case VocabRole::interactor: return "interactor";
  }
  return "?";
}

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Column ids follow the order of `tokens`.
  Vocabulary(VocabRole role, std::vector<std::string> tokens) : role_(role), tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw Error("empty token in vocabulary");
      if (!index_.emplace(tokens_[i], i).second) throw Error("duplicate token '" + tokens_[i] + "'");
    }
  }

  /// Keeps the `cap` most frequent tokens (ties by token), then assigns column
  /// ids in lexicographic token order.
  static Vocabulary build(VocabRole role, const std::map<std::string, std::int64_t>& freq,
                          std::optional<std::size_t> cap) {
    std::vector<std::pair<std::string, std::int64_t>> items(freq.begin(), freq.end());
    if (cap && items.size() > *cap) {
      std::stable_sort(items.begin(), items.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      items.resize(*cap);
    }
    std::vector<std::string> tokens;
    tokens.reserve(items.size());
    for (auto& [tok, _] : items) tokens.push_back(tok);
    std::sort(tokens.begin(), tokens.end());
    return Vocabulary(role, std::move(tokens));
  }

  VocabRole role() const { return role_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t col) const { return tokens_.at(col); }

  std::optional<std::size_t> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.role_ == b.role_ && a.tokens_ == b.tokens_;
  }

 private:
  VocabRole role_ = VocabRole::status;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Interaction network

struct Interaction {
  std::string src;  // author of the mention
  std::string dst;  // mentioned user
  Timestamp ts = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Mention counts among an ordered user list, restricted to events at or
/// before `as_of`. Index 0 is the candidate user.
struct InteractionNetwork {
  struct Edge {
    std::size_t src, dst;
    std::int64_t count;
    friend bool operator==(const Edge&, const Edge&) = default;
  };

  std::vector<std::string> users;
  std::vector<Edge> edges;  // sorted by (src, dst), count > 0, no self loops
  Timestamp as_of = kEndOfTime;

  std::size_t size() const { return users.size(); }

  std::int64_t count(std::size_t i, std::size_t j) const {
    for (const auto& e : edges)
      if (e.src == i && e.dst == j) return e.count;
    return 0;
  }
};

// ---------------------------------------------------------------------------
// Timelines

struct StatusRef {
  Timestamp ts = 0;
  std::size_t row = 0;  // row of M
  friend bool operator==(const StatusRef&, const StatusRef&) = default;
};

struct MentionRef {
  Timestamp ts = 0;
  std::size_t row = 0;  // row of P and W
  std::string author;
  friend bool operator==(const MentionRef&, const MentionRef&) = default;
};

struct UserTimeline {
  std::string user_id;
  std::vector<StatusRef> statuses;        // chronological, file order on ties
  std::vector<MentionRef> mentions;       // chronological, all at or before candidate_ts
  std::vector<std::string> interactors;   // sorted reciprocal mention partners
  std::optional<int> label;               // label of the candidate post
  Timestamp candidate_ts = 0;
  std::vector<std::string> candidate_tokens;

  friend bool operator==(const UserTimeline&, const UserTimeline&) = default;
};

/// Window index of each mention: window j (1 <= j < L) holds the mentions
/// between statuses j-1 and j, with the first window also taking everything
/// before status 0. Window L holds mentions after the last status, up to the
/// candidate post. A mention tied with a status belongs to the window that
/// ends at that status.
inline std::vector<std::vector<std::size_t>> mention_windows(const UserTimeline& tl) {
  const std::size_t n = tl.statuses.size();
  std::vector<std::vector<std::size_t>> windows(n + 1);
  for (std::size_t k = 0; k < tl.mentions.size(); ++k) {
    const Timestamp ts = tl.mentions[k].ts;
    std::size_t w = n;
    for (std::size_t j = 1; j < n; ++j) {
      if (ts <= tl.statuses[j].ts) {
        w = j;
        break;
      }
    }
    windows[w].push_back(k);
  }
  return windows;
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusConfig {
  std::optional<std::size_t> vocab_cap;
  std::size_t min_token_len = 2;

  static CorpusConfig from_json(const nlohmann::json& j) {
    CorpusConfig c;
    if (j.contains("vocab_cap") && !j.at("vocab_cap").is_null()) {
      if (!j.at("vocab_cap").is_number_unsigned()) throw Error("vocab_cap must be a nonnegative integer or null");
      c.vocab_cap = j.at("vocab_cap").get<std::size_t>();
    }
    if (j.contains("min_token_len")) {
      if (!j.at("min_token_len").is_number_unsigned()) throw Error("min_token_len must be a positive integer");
      c.min_token_len = j.at("min_token_len").get<std::size_t>();
      if (c.min_token_len == 0) throw Error("min_token_len must be a positive integer");
    }
    return c;
  }

  static CorpusConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path.string(), 1, e.what());
    }
  }

  nlohmann::json to_json() const {
    return {{"vocab_cap", vocab_cap ? nlohmann::json(*vocab_cap) : nlohmann::json(nullptr)},
            {"min_token_len", min_token_len}};
  }
};

class Corpus {
 public:
  Corpus() = default;

  Corpus(Vocabulary status_vocab, Vocabulary interaction_vocab, Vocabulary interactor_vocab,
         SparseCountMatrix statuses, SparseCountMatrix interactions, SparseCountMatrix interactor_content,
         std::vector<UserTimeline> timelines, std::vector<Interaction> events)
      : vocab_status_(std::move(status_vocab)),
        vocab_interaction_(std::move(interaction_vocab)),
        vocab_interactor_(std::move(interactor_vocab)),
        M_(std::move(statuses)),
        P_(std::move(interactions)),
        W_(std::move(interactor_content)),
        timelines_(std::move(timelines)),
        events_(std::move(events)) {
    if (M_.cols() != vocab_status_.size() || P_.cols() != vocab_interaction_.size() ||
        W_.cols() != vocab_interactor_.size())
      throw Error("matrix width does not match its vocabulary");
    if (P_.rows() != W_.rows()) throw Error("P and W must have the same row count");
    std::sort(timelines_.begin(), timelines_.end(),
              [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
    for (std::size_t i = 0; i < timelines_.size(); ++i) {
      const auto& tl = timelines_[i];
      if (!by_user_.emplace(tl.user_id, i).second) throw Error("duplicate timeline for " + tl.user_id);
      for (const auto& s : tl.statuses)
        if (s.row >= M_.rows()) throw Error("status row out of range for " + tl.user_id);
      for (const auto& m : tl.mentions)
        if (m.row >= P_.rows()) throw Error("mention row out of range for " + tl.user_id);
    }
    std::sort(events_.begin(), events_.end(), [](const auto& a, const auto& b) {
      return std::tie(a.ts, a.src, a.dst) < std::tie(b.ts, b.src, b.dst);
    });
    status_to_interactor_.resize(vocab_status_.size());
    for (std::size_t c = 0; c < vocab_status_.size(); ++c)
      status_to_interactor_[c] = vocab_interactor_.find(vocab_status_.token(c));
  }

  const Vocabulary& status_vocab() const { return vocab_status_; }
  const Vocabulary& interaction_vocab() const { return vocab_interaction_; }
  const Vocabulary& interactor_vocab() const { return vocab_interactor_; }

  /// M: one row per prior status of a candidate user.
  const SparseCountMatrix& statuses() const { return M_; }
  /// P: one row per retained mention (mention text).
  const SparseCountMatrix& interactions() const { return P_; }
  /// W: aligned with P; content posted by the mention's author up to that time.
  const SparseCountMatrix& interactor_content() const { return W_; }

  const std::vector<UserTimeline>& timelines() const { return timelines_; }
  const std::vector<Interaction>& events() const { return events_; }

  bool has_user(const std::string& id) const { return by_user_.count(id) != 0; }

  const UserTimeline& timeline(const std::string& id) const {
    auto it = by_user_.find(id);
    if (it == by_user_.end()) throw Error("unknown user '" + id + "'");
    return timelines_[it->second];
  }

  /// Status row re-expressed over the interactor vocabulary by token identity,
  /// so it can be projected with the interactor basis.
  WordVector status_in_interactor_space(std::size_t row) const {
    std::map<std::size_t, std::int64_t> counts;
    for (const auto& e : M_.row(row)) {
      if (auto c = status_to_interactor_[e.col]) counts[*c] += e.count;
    }
    return WordVector::from_counts(vocab_interactor_.size(), counts);
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.vocab_status_ == b.vocab_status_ && a.vocab_interaction_ == b.vocab_interaction_ &&
           a.vocab_interactor_ == b.vocab_interactor_ && a.M_ == b.M_ && a.P_ == b.P_ && a.W_ == b.W_ &&
           a.timelines_ == b.timelines_ && a.events_ == b.events_;
  }

 private:
  Vocabulary vocab_status_{VocabRole::status, {}};
  Vocabulary vocab_interaction_{VocabRole::interaction, {}};
  Vocabulary vocab_interactor_{VocabRole::interactor, {}};
  SparseCountMatrix M_, P_, W_;
  std::vector<UserTimeline> timelines_;
  std::vector<Interaction> events_;
  std::unordered_map<std::string, std::size_t> by_user_;
  std::vector<std::optional<std::size_t>> status_to_interactor_;
};

/// Users of `user`'s network (the user first, then its interactors) and the
/// time-ordered events among them.
struct UserNetworkEvents {
  std::vector<std::string> users;
  struct Event {
    std::size_t src, dst;
    Timestamp ts;
  };
  std::vector<Event> events;
};

inline UserNetworkEvents user_network_events(const Corpus& corpus, const std::string& user) {
  const auto& tl = corpus.timeline(user);
  UserNetworkEvents out;
  out.users.push_back(tl.user_id);
  for (const auto& g : tl.interactors)
    if (g != tl.user_id) out.users.push_back(g);
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < out.users.size(); ++i) idx.emplace(out.users[i], i);
  for (const auto& ev : corpus.events()) {
    auto s = idx.find(ev.src);
    auto d = idx.find(ev.dst);
    if (s == idx.end() || d == idx.end() || s->second == d->second) continue;
    out.events.push_back({s->second, d->second, ev.ts});
  }
  return out;
}

inline InteractionNetwork network_snapshot(const UserNetworkEvents& ne, Timestamp at) {
  InteractionNetwork net;
  net.as_of = at;
  net.users = ne.users;
  std::map<std::pair<std::size_t, std::size_t>, std::int64_t> counts;
  for (const auto& ev : ne.events) {
    if (ev.ts > at) break;  // events are time-ordered
    ++counts[{ev.src, ev.dst}];
  }
  for (const auto& [k, c] : counts) net.edges.push_back({k.first, k.second, c});
  return net;
}

/// Interaction network of `user` and its interactors as of `at` (inclusive).
inline InteractionNetwork network_snapshot(const Corpus& corpus, const std::string& user, Timestamp at) {
  return network_snapshot(user_network_events(corpus, user), at);
}

// ---------------------------------------------------------------------------
// Ingestion

namespace detail {

struct PostRecord {
  std::string user_id;
  Timestamp ts;
  std::string text;
  std::optional<int> label;
  std::size_t order;
};

struct InteractionRecord {
  Interaction ev;
  std::string text;
  std::size_t order;
};

template <typename F>
void for_each_json_line(std::istream& in, const std::string& name, F&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(name, lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError(name, lineno, "expected a JSON object");
    fn(j, lineno);
  }
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& name,
                                     std::size_t lineno) {
  if (!j.contains(key)) throw SchemaError(name, lineno, std::string("missing field '") + key + "'");
  return j.at(key);
}

inline std::string require_string(const nlohmann::json& j, const char* key, const std::string& name,
                                  std::size_t lineno) {
  const auto& v = require(j, key, name, lineno);
  if (!v.is_string()) throw SchemaError(name, lineno, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline Timestamp require_ts(const nlohmann::json& j, const char* key, const std::string& name,
                            std::size_t lineno) {
  const auto& v = require(j, key, name, lineno);
  if (!v.is_number_integer()) throw SchemaError(name, lineno, std::string("field '") + key + "' must be an integer");
  return v.get<Timestamp>();
}

inline std::vector<PostRecord> read_posts(std::istream& in, const std::string& name) {
  std::vector<PostRecord> out;
  for_each_json_line(in, name, [&](const nlohmann::json& j, std::size_t lineno) {
    PostRecord p{require_string(j, "user_id", name, lineno), require_ts(j, "ts", name, lineno),
                 require_string(j, "text", name, lineno), std::nullopt, out.size()};
    if (j.contains("label") && !j.at("label").is_null()) {
      const auto& l = j.at("label");
      if (!l.is_number_integer() || (l.get<int>() != 0 && l.get<int>() != 1))
        throw SchemaError(name, lineno, "field 'label' must be 0 or 1");
      p.label = l.get<int>();
    }
    out.push_back(std::move(p));
  });
  return out;
}

inline std::vector<InteractionRecord> read_interactions(std::istream& in, const std::string& name) {
  std::vector<InteractionRecord> out;
  for_each_json_line(in, name, [&](const nlohmann::json& j, std::size_t lineno) {
    InteractionRecord r{{require_string(j, "src", name, lineno), require_string(j, "dst", name, lineno),
                         require_ts(j, "ts", name, lineno)},
                        require_string(j, "text", name, lineno),
                        out.size()};
    out.push_back(std::move(r));
  });
  return out;
}

inline std::map<std::size_t, std::int64_t> count_tokens(const std::vector<std::string>& tokens,
                                                        const Vocabulary& vocab) {
  std::map<std::size_t, std::int64_t> counts;
  for (const auto& t : tokens)
    if (auto c = vocab.find(t)) ++counts[*c];
  return counts;
}

}  // namespace detail

/// Builds a corpus from in-memory JSONL streams; `posts_name` and
/// `interactions_name` label diagnostics.
inline Corpus build_corpus(std::istream& posts_in, const std::string& posts_name, std::istream& inter_in,
                           const std::string& inter_name, const CorpusConfig& config) {
  using detail::PostRecord;
  const auto posts = detail::read_posts(posts_in, posts_name);
  const auto inters = detail::read_interactions(inter_in, inter_name);
  auto tok = [&](const std::string& text) { return tokenize(text, config.min_token_len); };
  auto post_before = [](const PostRecord& a, const PostRecord& b) {
    return std::pair(a.ts, a.order) < std::pair(b.ts, b.order);
  };

  std::map<std::string, std::vector<const PostRecord*>> by_user;
  for (const auto& p : posts) by_user[p.user_id].push_back(&p);
  for (auto& [_, v] : by_user)
    std::sort(v.begin(), v.end(), [&](auto* a, auto* b) { return post_before(*a, *b); });

  std::map<std::string, std::vector<const detail::InteractionRecord*>> by_src, by_dst;
  std::vector<Interaction> events;
  for (const auto& r : inters) {
    if (r.ev.src == r.ev.dst) continue;
    by_src[r.ev.src].push_back(&r);
    by_dst[r.ev.dst].push_back(&r);
    events.push_back(r.ev);
  }
  auto by_time = [](auto* a, auto* b) { return std::pair(a->ev.ts, a->order) < std::pair(b->ev.ts, b->order); };
  for (auto& [_, v] : by_src) std::sort(v.begin(), v.end(), by_time);
  for (auto& [_, v] : by_dst) std::sort(v.begin(), v.end(), by_time);

  struct PendingUser {
    UserTimeline tl;
    std::vector<std::vector<std::string>> status_tokens;
    std::vector<std::vector<std::string>> mention_tokens;
    std::vector<std::vector<std::string>> author_tokens;
  };
  std::vector<PendingUser> pending;

  for (const auto& [uid, plist] : by_user) {
    const PostRecord* cand = nullptr;
    std::size_t n_labeled = 0;
    for (auto* p : plist) {
      if (p->label) {
        cand = p;
        ++n_labeled;
      }
    }
    if (cand == nullptr) continue;
    if (n_labeled > 1)
      log_warn("user " + uid + " has " + std::to_string(n_labeled) + " labeled posts; using the latest");

    PendingUser pu;
    pu.tl.user_id = uid;
    pu.tl.label = cand->label;
    pu.tl.candidate_ts = cand->ts;
    pu.tl.candidate_tokens = tok(cand->text);

    std::vector<const PostRecord*> prior;
    for (auto* p : plist)
      if (post_before(*p, *cand)) prior.push_back(p);
    if (prior.empty()) {
      log_warn("user " + uid + " has no status before the candidate post; excluded");
      continue;
    }
    if (prior.size() > kMaxStatusesPerUser)
      prior.erase(prior.begin(), prior.end() - static_cast<std::ptrdiff_t>(kMaxStatusesPerUser));
    for (auto* p : prior) {
      pu.tl.statuses.push_back({p->ts, 0});
      pu.status_tokens.push_back(tok(p->text));
    }

    std::set<std::string> mentioned_by_user;
    if (auto it = by_src.find(uid); it != by_src.end())
      for (auto* r : it->second)
        if (r->ev.ts <= cand->ts) mentioned_by_user.insert(r->ev.dst);

    std::set<std::string> partners;
    if (auto it = by_dst.find(uid); it != by_dst.end()) {
      for (auto* r : it->second) {
        if (r->ev.ts > cand->ts || !mentioned_by_user.count(r->ev.src)) continue;
        partners.insert(r->ev.src);
        pu.tl.mentions.push_back({r->ev.ts, 0, r->ev.src});
        pu.mention_tokens.push_back(tok(r->text));
        std::vector<std::string> content;
        if (auto a = by_user.find(r->ev.src); a != by_user.end()) {
          for (auto* p : a->second) {
            if (p->ts > r->ev.ts) break;
            auto t = tok(p->text);
            content.insert(content.end(), t.begin(), t.end());
          }
        }
        pu.author_tokens.push_back(std::move(content));
      }
    }
    pu.tl.interactors.assign(partners.begin(), partners.end());
    pending.push_back(std::move(pu));
  }

  std::map<std::string, std::int64_t> f_status, f_inter, f_author;
  for (const auto& pu : pending) {
    for (const auto& ts : pu.status_tokens)
      for (const auto& t : ts) ++f_status[t];
    for (const auto& ts : pu.mention_tokens)
      for (const auto& t : ts) ++f_inter[t];
    for (const auto& ts : pu.author_tokens)
      for (const auto& t : ts) ++f_author[t];
    // statuses are projected with the interactor basis too
    for (const auto& ts : pu.status_tokens)
      for (const auto& t : ts) ++f_author[t];
  }
  auto vs = Vocabulary::build(VocabRole::status, f_status, config.vocab_cap);
  auto vi = Vocabulary::build(VocabRole::interaction, f_inter, config.vocab_cap);
  auto va = Vocabulary::build(VocabRole::interactor, f_author, config.vocab_cap);

  SparseCountMatrix M(vs.size()), P(vi.size()), W(va.size());
  std::vector<UserTimeline> timelines;
  timelines.reserve(pending.size());
  for (auto& pu : pending) {
    for (std::size_t s = 0; s < pu.tl.statuses.size(); ++s)
      pu.tl.statuses[s].row = M.append_row(detail::count_tokens(pu.status_tokens[s], vs));
    for (std::size_t k = 0; k < pu.tl.mentions.size(); ++k) {
      pu.tl.mentions[k].row = P.append_row(detail::count_tokens(pu.mention_tokens[k], vi));
      W.append_row(detail::count_tokens(pu.author_tokens[k], va));
    }
    timelines.push_back(std::move(pu.tl));
  }
  return Corpus(std::move(vs), std::move(vi), std::move(va), std::move(M), std::move(P), std::move(W),
                std::move(timelines), std::move(events));
}

inline Corpus build_corpus(const std::filesystem::path& posts_file, const std::filesystem::path& interactions_file,
                           const CorpusConfig& config) {
  std::ifstream posts(posts_file);
  if (!posts) throw Error("cannot open " + posts_file.string());
  std::ifstream inters(interactions_file);
  if (!inters) throw Error("cannot open " + interactions_file.string());
  return build_corpus(posts, posts_file.string(), inters, interactions_file.string(), config);
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline void check_csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") != std::string::npos)
    throw Error("user id '" + s + "' cannot be written to CSV");
}

inline void write_vocab(const std::filesystem::path& p, const Vocabulary& v) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t c = 0; c < v.size(); ++c) j[v.token(c)] = c;
  std::ofstream(p) << j.dump() << '\n';
}

inline Vocabulary read_vocab(const std::filesystem::path& p, VocabRole role) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  auto j = nlohmann::json::parse(in);
  std::vector<std::string> tokens(j.size());
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto col = it.value().get<std::size_t>();
    if (col >= tokens.size() || !tokens[col].empty()) throw Error(p.string() + ": column ids are not dense");
    tokens[col] = it.key();
  }
  return Vocabulary(role, std::move(tokens));
}

inline void write_matrix(const std::filesystem::path& p, const SparseCountMatrix& m) {
  std::ofstream out(p);
  out << "row,col,count\n";
  for (const auto& t : m.triplets()) out << t.row << ',' << t.col << ',' << t.count << '\n';
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename F>
void for_each_csv_row(const std::filesystem::path& p, std::size_t n_fields, F&& fn) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  std::string line;
  std::getline(in, line);  // header
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != n_fields) throw SchemaError(p.string(), lineno, "expected " + std::to_string(n_fields) + " fields");
    try {
      fn(f);
    } catch (const std::logic_error& e) {
      throw SchemaError(p.string(), lineno, e.what());
    }
  }
}

inline SparseCountMatrix read_matrix(const std::filesystem::path& p, std::size_t rows, std::size_t cols) {
  std::vector<SparseCountMatrix::Triplet> trip;
  for_each_csv_row(p, 3, [&](const std::vector<std::string>& f) {
    trip.push_back({std::stoull(f[0]), std::stoull(f[1]), std::stoll(f[2])});
  });
  return SparseCountMatrix::from_triplets(rows, cols, std::move(trip));
}

inline nlohmann::json timeline_to_json(const UserTimeline& tl) {
  nlohmann::json st = nlohmann::json::array(), me = nlohmann::json::array();
  for (const auto& s : tl.statuses) st.push_back({s.ts, s.row});
  for (const auto& m : tl.mentions) me.push_back({m.ts, m.row, m.author});
  return {{"user_id", tl.user_id},
          {"label", tl.label ? nlohmann::json(*tl.label) : nlohmann::json(nullptr)},
          {"candidate_ts", tl.candidate_ts},
          {"candidate_tokens", tl.candidate_tokens},
          {"interactors", tl.interactors},
          {"statuses", st},
          {"mentions", me}};
}

inline UserTimeline timeline_from_json(const nlohmann::json& j) {
  UserTimeline tl;
  tl.user_id = j.at("user_id").get<std::string>();
  if (!j.at("label").is_null()) tl.label = j.at("label").get<int>();
  tl.candidate_ts = j.at("candidate_ts").get<Timestamp>();
  tl.candidate_tokens = j.at("candidate_tokens").get<std::vector<std::string>>();
  tl.interactors = j.at("interactors").get<std::vector<std::string>>();
  for (const auto& s : j.at("statuses")) tl.statuses.push_back({s.at(0).get<Timestamp>(), s.at(1).get<std::size_t>()});
  for (const auto& m : j.at("mentions"))
    tl.mentions.push_back({m.at(0).get<Timestamp>(), m.at(1).get<std::size_t>(), m.at(2).get<std::string>()});
  return tl;
}

}  // namespace detail

/// Writes the corpus as a directory of vocabularies, matrix triplets, the
/// aggregated network, the raw interaction events and timelines.
inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto shape = [](const SparseCountMatrix& m) { return nlohmann::json::array({m.rows(), m.cols()}); };
  nlohmann::json meta = {{"format_version", 1},
                         {"shapes",
                          {{"M", shape(corpus.statuses())},
                           {"P", shape(corpus.interactions())},
                           {"W", shape(corpus.interactor_content())}}}};
  std::ofstream(dir / "corpus.json") << meta.dump(2) << '\n';
  detail::write_vocab(dir / "vocab_status.json", corpus.status_vocab());
  detail::write_vocab(dir / "vocab_interaction.json", corpus.interaction_vocab());
  detail::write_vocab(dir / "vocab_interactor.json", corpus.interactor_vocab());
  detail::write_matrix(dir / "matrix_M.csv", corpus.statuses());
  detail::write_matrix(dir / "matrix_P.csv", corpus.interactions());
  detail::write_matrix(dir / "matrix_W.csv", corpus.interactor_content());

  std::map<std::pair<std::string, std::string>, std::pair<std::int64_t, Timestamp>> agg;
  {
    std::ofstream ev(dir / "network_events.csv");
    ev << "src,dst,ts\n";
    for (const auto& e : corpus.events()) {
      detail::check_csv_field(e.src);
      detail::check_csv_field(e.dst);
      ev << e.src << ',' << e.dst << ',' << e.ts << '\n';
      auto& a = agg[{e.src, e.dst}];
      ++a.first;
      a.second = std::max(a.second, e.ts);
    }
  }
  std::ofstream net(dir / "network.csv");
  net << "src,dst,count,ts_last\n";
  for (const auto& [k, v] : agg) net << k.first << ',' << k.second << ',' << v.first << ',' << v.second << '\n';

  std::ofstream tl(dir / "timelines.jsonl");
  for (const auto& t : corpus.timelines()) tl << detail::timeline_to_json(t).dump() << '\n';
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "corpus.json");
  if (!meta_in) throw Error("not a corpus directory: " + dir.string());
  auto meta = nlohmann::json::parse(meta_in);
  if (meta.value("format_version", 0) != 1) throw Error("unsupported corpus format_version");
  auto rows = [&](const char* k) { return meta.at("shapes").at(k).at(0).get<std::size_t>(); };

  auto vs = detail::read_vocab(dir / "vocab_status.json", VocabRole::status);
  auto vi = detail::read_vocab(dir / "vocab_interaction.json", VocabRole::interaction);
  auto va = detail::read_vocab(dir / "vocab_interactor.json", VocabRole::interactor);
  auto M = detail::read_matrix(dir / "matrix_M.csv", rows("M"), vs.size());
  auto P = detail::read_matrix(dir / "matrix_P.csv", rows("P"), vi.size());
  auto W = detail::read_matrix(dir / "matrix_W.csv", rows("W"), va.size());

  std::vector<Interaction> events;
  detail::for_each_csv_row(dir / "network_events.csv", 3, [&](const std::vector<std::string>& f) {
    events.push_back({f[0], f[1], std::stoll(f[2])});
  });

  std::vector<UserTimeline> timelines;
  std::ifstream tin(dir / "timelines.jsonl");
  if (!tin) throw Error("missing timelines.jsonl in " + dir.string());
  detail::for_each_json_line(tin, (dir / "timelines.jsonl").string(), [&](const nlohmann::json& j, std::size_t) {
    timelines.push_back(detail::timeline_from_json(j));
  });
  return Corpus(std::move(vs), std::move(vi), std::move(va), std::move(M), std::move(P), std::move(W),
                std::move(timelines), std::move(events));
}

}  // namespace driftcast
