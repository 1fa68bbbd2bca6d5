#pragma once

#include <sstream>
#include <string>

#include "driftcast/corpus.hpp"

namespace driftcast::fixtures {

// alice: 3 prior statuses, then the labeled candidate post at t=1000.
// bob and carol mention alice and are mentioned back; dave is not.
inline const char* kPosts = R"({"user_id":"alice","ts":100,"text":"Vote vote today"}
{"user_id":"alice","ts":200,"text":"the rigging is real"}
{"user_id":"bob","ts":50,"text":"resist rigging now"}
{"user_id":"alice","ts":300,"text":"Market day"}
{"user_id":"carol","ts":60,"text":"fashion week lagos"}
{"user_id":"alice","ts":1000,"text":"We resist the rigging","label":1}
{"user_id":"erin","ts":10,"text":"only one post","label":0}
)";

inline const char* kInteractions = R"({"src":"alice","dst":"bob","ts":20,"text":"hi bob"}
{"src":"alice","dst":"carol","ts":30,"text":"hi carol"}
{"src":"bob","dst":"alice","ts":150,"text":"@alice resist the rigging"}
{"src":"carol","dst":"alice","ts":250,"text":"@alice new fashion"}
{"src":"dave","dst":"alice","ts":260,"text":"@alice spam spam"}
{"src":"bob","dst":"carol","ts":400,"text":"@carol resist"}
)";

inline Corpus make_corpus(const std::string& posts, const std::string& inters, CorpusConfig cfg = {}) {
  std::istringstream p(posts), i(inters);
  return build_corpus(p, "posts.jsonl", i, "interactions.jsonl", cfg);
}

inline Corpus fixture_corpus() { return make_corpus(kPosts, kInteractions); }

}  // namespace driftcast::fixtures
