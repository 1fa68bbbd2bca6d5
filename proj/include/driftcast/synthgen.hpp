#pragma once

// Synthetic corpora with planted ground truth.
//
// Every word belongs to a topic block; topic 0 is the protest topic. Each
// candidate user has a hidden type. Users of the protest type are mentioned
// by protest-heavy authors with protest words, the others by authors of one
// off-topic block. The user's latent state follows the log-space GBM law
// with the drift of the mentioned topic boosted by the number of mentions in
// each window, and status words are drawn from the topic mixture given by
// the normalized state. Every user starts out posting mostly about the
// neutral topic (the last block), so histories drift from there towards the
// mentioned topic. The label equals the type with probability
// signal_strength and is otherwise an independent draw.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftcast/common.hpp"
#include "driftcast/corpus.hpp"

namespace driftcast {

struct SynthConfig {
  std::uint64_t seed = 0;
  int n_users = 200;
  int n_interactors_per_user = 4;
  int statuses_per_user = 20;
  int I_true = 5;
  // words available to each role, spread evenly over the topic blocks
  int vocab_status = 50;
  int vocab_interaction = 50;
  int vocab_interactor = 50;
  double mu_min = 0.01, mu_max = 0.05;          // 1/day
  double sigma_min = 0.05, sigma_max = 0.15;    // 1/sqrt(day)
  double signal_strength = 1.0;
  double time_span_days = 60.0;
  double positive_rate = 0.25;
  int words_per_status = 30;
  int words_per_mention = 20;
  int posts_per_interactor = 10;
  double mentions_per_window = 0.5;  // Poisson mean between statuses
  int final_mentions = 40;           // between the last status and the candidate post
  double drift_boost = 2.0;          // n = 1 + drift_boost * mentions in the window
  double topic_purity = 0.8;         // share of an author's words from its own topic
  double neutral_start = 2.0;        // initial log-state lead of the neutral topic
  double gap_shape = 4.0;            // gamma shape of inter-post gaps; 1 is a Poisson process
  Timestamp epoch = 1420070400;      // 2015-01-01T00:00:00Z

  int words_per_topic(int role_vocab) const { return (role_vocab + I_true - 1) / I_true; }

  void validate() const {
    if (n_users <= 0 || n_interactors_per_user <= 0 || statuses_per_user <= 0 || I_true < 3)
      throw Error("synth config: counts must be positive and I_true >= 3");
    if (statuses_per_user > static_cast<int>(kMaxStatusesPerUser))
      throw Error("synth config: statuses_per_user exceeds " + std::to_string(kMaxStatusesPerUser));
    if (vocab_status < I_true || vocab_interaction < I_true || vocab_interactor < I_true)
      throw Error("synth config: each vocabulary needs at least one word per topic");
    if (!(mu_min <= mu_max) || !(sigma_min > 0.0 && sigma_min <= sigma_max))
      throw Error("synth config: invalid mu or sigma range");
    if (!(signal_strength >= 0.0 && signal_strength <= 1.0)) throw Error("synth config: signal_strength outside [0, 1]");
    if (!(positive_rate > 0.0 && positive_rate < 1.0)) throw Error("synth config: positive_rate outside (0, 1)");
    if (!(time_span_days > 1.0)) throw Error("synth config: time_span_days must exceed 1");
    if (words_per_status <= 0 || words_per_mention <= 0 || posts_per_interactor <= 0)
      throw Error("synth config: word and post counts must be positive");
    if (mentions_per_window < 0.0 || final_mentions < 0 || drift_boost < 0.0)
      throw Error("synth config: mention counts and boost must be nonnegative");
    if (!(topic_purity >= 0.0 && topic_purity <= 1.0)) throw Error("synth config: topic_purity outside [0, 1]");
    if (!(gap_shape > 0.0)) throw Error("synth config: gap_shape must be positive");
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"n_users", n_users},
            {"n_interactors_per_user", n_interactors_per_user},
            {"statuses_per_user", statuses_per_user},
            {"I_true", I_true},
            {"vocab_status", vocab_status},
            {"vocab_interaction", vocab_interaction},
            {"vocab_interactor", vocab_interactor},
            {"mu_range", {mu_min, mu_max}},
            {"sigma_range", {sigma_min, sigma_max}},
            {"signal_strength", signal_strength},
            {"time_span_days", time_span_days},
            {"positive_rate", positive_rate},
            {"words_per_status", words_per_status},
            {"words_per_mention", words_per_mention},
            {"posts_per_interactor", posts_per_interactor},
            {"mentions_per_window", mentions_per_window},
            {"final_mentions", final_mentions},
            {"drift_boost", drift_boost},
            {"topic_purity", topic_purity},
            {"neutral_start", neutral_start},
            {"gap_shape", gap_shape},
            {"epoch", epoch}};
  }

  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig c;
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    auto range = [&](const char* key, double& lo, double& hi) {
      if (!j.contains(key)) return;
      const auto& r = j.at(key);
      if (!r.is_array() || r.size() != 2) throw Error(std::string("synth config: ") + key + " must be [lo, hi]");
      lo = r[0].get<double>();
      hi = r[1].get<double>();
    };
    static const char* known[] = {"seed", "n_users", "n_interactors_per_user", "statuses_per_user", "I_true",
                                  "vocab_status", "vocab_interaction", "vocab_interactor", "mu_range",
                                  "sigma_range", "signal_strength", "time_span_days", "positive_rate",
                                  "words_per_status", "words_per_mention", "posts_per_interactor",
                                  "mentions_per_window", "final_mentions", "drift_boost", "topic_purity", "neutral_start",
                                  "gap_shape", "epoch"};
    for (const auto& [k, _] : j.items())
      if (std::find(std::begin(known), std::end(known), k) == std::end(known))
        throw Error("synth config: unknown key " + k);
    try {
      get("seed", c.seed);
      get("n_users", c.n_users);
      get("n_interactors_per_user", c.n_interactors_per_user);
      get("statuses_per_user", c.statuses_per_user);
      get("I_true", c.I_true);
      get("vocab_status", c.vocab_status);
      get("vocab_interaction", c.vocab_interaction);
      get("vocab_interactor", c.vocab_interactor);
      range("mu_range", c.mu_min, c.mu_max);
      range("sigma_range", c.sigma_min, c.sigma_max);
      get("signal_strength", c.signal_strength);
      get("time_span_days", c.time_span_days);
      get("positive_rate", c.positive_rate);
      get("words_per_status", c.words_per_status);
      get("words_per_mention", c.words_per_mention);
      get("posts_per_interactor", c.posts_per_interactor);
      get("mentions_per_window", c.mentions_per_window);
      get("final_mentions", c.final_mentions);
      get("drift_boost", c.drift_boost);
      get("topic_purity", c.topic_purity);
      get("neutral_start", c.neutral_start);
      get("gap_shape", c.gap_shape);
      get("epoch", c.epoch);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("synth config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

struct SynthTruthUser {
  std::string user_id;
  int label = 0;
  int type = 0;          // 1: mentioned by protest-heavy authors
  int target_topic = 0;  // topic whose drift the mentions boost
  std::vector<double> mu_true, sigma_true;
  int protest_topic_index = 0;
};

struct SynthData {
  std::vector<std::string> posts;         // JSONL lines
  std::vector<std::string> interactions;  // JSONL lines
  nlohmann::json truth;
  std::vector<SynthTruthUser> users;

  std::string posts_text() const {
    std::string s;
    for (const auto& l : posts) s += l + "\n";
    return s;
  }
  std::string interactions_text() const {
    std::string s;
    for (const auto& l : interactions) s += l + "\n";
    return s;
  }
};

namespace detail {

inline std::string synth_word(int topic, int j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%dw%02d", topic, j);
  return buf;
}

class SynthWriter {
 public:
  SynthWriter(const SynthConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  std::string words_from_mixture(const std::vector<double>& topic_weights, int n, int role_vocab) {
    std::discrete_distribution<int> pick(topic_weights.begin(), topic_weights.end());
    std::uniform_int_distribution<int> word(0, cfg_.words_per_topic(role_vocab) - 1);
    std::string out;
    for (int k = 0; k < n; ++k) {
      if (k) out += ' ';
      out += synth_word(pick(rng_), word(rng_));
    }
    return out;
  }

  /// Weights on a single topic.
  std::vector<double> pure(int topic) const {
    std::vector<double> w(static_cast<std::size_t>(cfg_.I_true), 0.0);
    w[static_cast<std::size_t>(topic)] = 1.0;
    return w;
  }

  /// Weights putting `purity` on one topic and the rest spread evenly.
  std::vector<double> focused(int topic) const {
    std::vector<double> w(static_cast<std::size_t>(cfg_.I_true), (1.0 - cfg_.topic_purity) / cfg_.I_true);
    w[static_cast<std::size_t>(topic)] += cfg_.topic_purity;
    return w;
  }

 private:
  const SynthConfig& cfg_;
  std::mt19937_64& rng_;
};

inline Timestamp day_ts(const SynthConfig& cfg, double day) {
  return cfg.epoch + static_cast<Timestamp>(std::llround(day * kSecondsPerDay));
}

}  // namespace detail

/// Draws a synthetic dataset. The output depends only on the config.
inline SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, "synth");
  detail::SynthWriter writer(cfg, rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> off_topic(1, cfg.I_true - 2);
  std::poisson_distribution<int> window_mentions(cfg.mentions_per_window);
  const int I = cfg.I_true;
  constexpr int kProtest = 0;
  const int neutral = I - 1;

  SynthData out;
  auto post = [&](const std::string& user, Timestamp ts, const std::string& text, std::optional<int> label) {
    nlohmann::json j = {{"user_id", user}, {"ts", ts}, {"text", text}};
    if (label) j["label"] = *label;
    out.posts.push_back(j.dump());
  };
  auto mention = [&](const std::string& src, const std::string& dst, Timestamp ts, const std::string& text) {
    out.interactions.push_back(nlohmann::json{{"src", src}, {"dst", dst}, {"ts", ts}, {"text", text}}.dump());
  };

  const int width = std::max(3, static_cast<int>(std::to_string(cfg.n_users).size()));
  for (int ui = 0; ui < cfg.n_users; ++ui) {
    std::string uid = std::to_string(ui);
    uid = "u" + std::string(static_cast<std::size_t>(width) - uid.size(), '0') + uid;

    SynthTruthUser tu;
    tu.user_id = uid;
    tu.protest_topic_index = kProtest;
    tu.type = unif(rng) < cfg.positive_rate ? 1 : 0;
    const bool label_from_type = unif(rng) < cfg.signal_strength;
    const int independent = unif(rng) < cfg.positive_rate ? 1 : 0;
    tu.label = label_from_type ? tu.type : independent;
    const int own_off_topic = off_topic(rng);
    tu.target_topic = tu.type == 1 ? kProtest : own_off_topic;
    for (int i = 0; i < I; ++i) {
      tu.mu_true.push_back(cfg.mu_min + (cfg.mu_max - cfg.mu_min) * unif(rng));
      tu.sigma_true.push_back(cfg.sigma_min + (cfg.sigma_max - cfg.sigma_min) * unif(rng));
    }

    // interactors post during day [0, 1) and are mentioned back by the user
    std::vector<std::string> partners;
    for (int k = 0; k < cfg.n_interactors_per_user; ++k) {
      const std::string gid = uid + "g" + std::to_string(k);
      partners.push_back(gid);
      const auto weights = writer.focused(tu.target_topic);
      for (int p = 0; p < cfg.posts_per_interactor; ++p)
        post(gid, detail::day_ts(cfg, unif(rng)), writer.words_from_mixture(weights, cfg.words_per_mention, cfg.vocab_interactor), std::nullopt);
      mention(uid, gid, detail::day_ts(cfg, unif(rng)),
              writer.words_from_mixture(writer.focused(own_off_topic), cfg.words_per_mention, cfg.vocab_interaction));
    }

    // post times on [1, span]: gamma gaps normalized to the span (uniform order
    // statistics of a Poisson process when gap_shape is 1); the last is the candidate post
    std::vector<double> days;
    {
      std::gamma_distribution<double> gap(cfg.gap_shape, 1.0);
      std::vector<double> gaps;
      for (int s = 0; s <= cfg.statuses_per_user + 1; ++s) gaps.push_back(gap(rng));
      const double total = std::accumulate(gaps.begin(), gaps.end(), 0.0);
      double acc = 0.0;
      for (int s = 0; s <= cfg.statuses_per_user; ++s) {
        acc += gaps[static_cast<std::size_t>(s)];
        days.push_back(1.0 + (cfg.time_span_days - 1.0) * acc / total);
      }
    }

    auto mentions_in = [&](double from, double to, int count) {
      const auto weights = writer.focused(tu.target_topic);
      std::uniform_int_distribution<int> who(0, cfg.n_interactors_per_user - 1);
      for (int k = 0; k < count; ++k) {
        const double d = from + (to - from) * unif(rng);
        mention(partners[static_cast<std::size_t>(who(rng))], uid, detail::day_ts(cfg, d),
                writer.words_from_mixture(weights, cfg.words_per_mention, cfg.vocab_interaction));
      }
    };

    std::vector<double> log_s(static_cast<std::size_t>(I));
    for (auto& x : log_s) x = 0.5 * unif(rng);
    log_s[static_cast<std::size_t>(neutral)] += cfg.neutral_start;
    auto status_text = [&] {
      std::vector<double> w;
      const double mx = *std::max_element(log_s.begin(), log_s.end());
      for (double x : log_s) w.push_back(std::exp(x - mx));
      return writer.words_from_mixture(w, cfg.words_per_status, cfg.vocab_status);
    };

    post(uid, detail::day_ts(cfg, days[0]), status_text(), std::nullopt);
    for (int s = 1; s < cfg.statuses_per_user; ++s) {
      const int k = window_mentions(rng);
      mentions_in(days[static_cast<std::size_t>(s) - 1], days[static_cast<std::size_t>(s)], k);
      const double t = days[static_cast<std::size_t>(s)] - days[static_cast<std::size_t>(s) - 1];
      for (int i = 0; i < I; ++i) {
        const double n = i == tu.target_topic ? 1.0 + cfg.drift_boost * k : 1.0;
        const double mu = tu.mu_true[static_cast<std::size_t>(i)], sg = tu.sigma_true[static_cast<std::size_t>(i)];
        log_s[static_cast<std::size_t>(i)] += (mu * n - 0.5 * sg * sg) * t + sg * std::sqrt(t) * normal(rng);
      }
      post(uid, detail::day_ts(cfg, days[static_cast<std::size_t>(s)]), status_text(), std::nullopt);
    }
    const double last = days[static_cast<std::size_t>(cfg.statuses_per_user) - 1];
    const double cand = days.back();
    mentions_in(last, cand, cfg.final_mentions);
    // candidate posts stay on one topic so the lexicon is the protest block
    const int cand_topic = tu.label == 1 ? kProtest : own_off_topic;
    post(uid, detail::day_ts(cfg, cand),
         writer.words_from_mixture(writer.pure(cand_topic), cfg.words_per_status, cfg.vocab_status), tu.label);
    out.users.push_back(std::move(tu));
  }

  nlohmann::json users = nlohmann::json::array();
  for (const auto& u : out.users)
    users.push_back({{"user_id", u.user_id},
                     {"label", u.label},
                     {"type", u.type},
                     {"target_topic", u.target_topic},
                     {"mu_true", u.mu_true},
                     {"sigma_true", u.sigma_true},
                     {"protest_topic_index", u.protest_topic_index}});
  out.truth = {{"users", users}, {"config", cfg.to_json()}};
  return out;
}

/// Writes posts.jsonl, interactions.jsonl and truth.json into `dir`.
inline void write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (dir / name).string());
    f << text;
  };
  put("posts.jsonl", data.posts_text());
  put("interactions.jsonl", data.interactions_text());
  put("truth.json", data.truth.dump(2) + "\n");
}

/// Builds a corpus straight from generated data.
inline Corpus synth_corpus(const SynthData& data, const CorpusConfig& config = {}) {
  std::istringstream posts(data.posts_text()), inters(data.interactions_text());
  return build_corpus(posts, "posts.jsonl", inters, "interactions.jsonl", config);
}

}  // namespace driftcast
