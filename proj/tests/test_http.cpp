#include <atomic>
#include <thread>

#include <gtest/gtest.h>

#include "ragfair/attribution.hpp"
#include "ragfair/generation.hpp"
#include "ragfair/retrieval.hpp"

using namespace ragfair;

namespace {

/// In-process plugin server on an ephemeral port.
class FakeServer {
 public:
  FakeServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& raw() { return server_; }
  http::Endpoint endpoint() const { return http::Endpoint::parse("http://127.0.0.1:" + std::to_string(port_)); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

http::RetryPolicy fast() {
  http::RetryPolicy p;
  p.max_attempts = 3;
  p.initial_backoff = std::chrono::milliseconds(1);
  p.timeout = std::chrono::milliseconds(2000);
  return p;
}

void reply(httplib::Response& res, const json& j) { res.set_content(j.dump(), "application/json"); }

QueryInstance query(std::string text) {
  QueryInstance q;
  q.query_id = "q1";
  q.query_text = std::move(text);
  return q;
}

}  // namespace

TEST(Endpoint, ParseForms) {
  auto e = http::Endpoint::parse("http://host:8080/api/");
  EXPECT_EQ(e.host, "host");
  EXPECT_EQ(e.port, 8080);
  EXPECT_EQ(e.base_path, "/api");
  EXPECT_EQ(http::Endpoint::parse("http://h").port, 80);
  EXPECT_THROW(http::Endpoint::parse("localhost:8000"), ConfigError);
  EXPECT_THROW(http::Endpoint::parse("https://h:1"), ConfigError);
  EXPECT_THROW(http::Endpoint::parse("http://h:abc"), ConfigError);
  EXPECT_THROW(http::Endpoint::parse("http://h:70000"), ConfigError);
  EXPECT_THROW(http::Endpoint::parse("http://:80"), ConfigError);
}

TEST(ExternalRetriever, PassesThroughAndCanonicalizes) {
  FakeServer s;
  json seen;
  s.raw().Post("/retrieve", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    reply(res, {{"results", {{{"doc_id", "b"}, {"score", 1.0}}, {{"doc_id", "a"}, {"score", 1.0}}, {{"doc_id", "c"}, {"score", 3.0}}}}});
  });
  ExternalRetriever r("ext", s.endpoint(), {"a", "b", "c"}, fast());
  auto out = r.retrieve(query("who"), 2);
  EXPECT_EQ(seen["query"], "who");
  EXPECT_EQ(seen["k"], 2);
  ASSERT_EQ(out.entries.size(), 2u);
  EXPECT_EQ(out.entries[0].doc_id, "c");
  EXPECT_EQ(out.entries[1].doc_id, "a");
}

TEST(ExternalRetriever, UnknownDocIdNamed) {
  FakeServer s;
  s.raw().Post("/retrieve", [](const httplib::Request&, httplib::Response& res) {
    reply(res, {{"results", {{{"doc_id", "ghost-42"}, {"score", 1.0}}}}});
  });
  ExternalRetriever r("ext", s.endpoint(), {"a"}, fast());
  try {
    r.retrieve(query("x"), 1);
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost-42"), std::string::npos);
  }
}

TEST(PostJson, RetriesServerErrorsButNotClientErrors) {
  FakeServer s;
  std::atomic<int> calls{0};
  s.raw().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    reply(res, {{"ok", true}});
  });
  std::atomic<int> bad_calls{0};
  s.raw().Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    ++bad_calls;
    res.status = 422;
    res.set_content("nope", "text/plain");
  });
  EXPECT_EQ(http::post_json(s.endpoint(), "/flaky", json::object(), fast())["ok"], true);
  EXPECT_EQ(calls, 3);
  EXPECT_THROW(http::post_json(s.endpoint(), "/bad", json::object(), fast()), ServiceError);
  EXPECT_EQ(bad_calls, 1);

  calls = -10;
  EXPECT_THROW(http::post_json(s.endpoint(), "/flaky", json::object(), fast()), ServiceError);
  EXPECT_EQ(calls, -7);
}

TEST(PostJson, UnreachableEndpointFails) {
  auto p = fast();
  p.max_attempts = 2;
  EXPECT_THROW(http::post_json(http::Endpoint::parse("http://127.0.0.1:1"), "/x", json::object(), p), ServiceError);
  EXPECT_FALSE(http::reachable(http::Endpoint::parse("http://127.0.0.1:1"), std::chrono::milliseconds(200)));
}

TEST(HttpGenerator, SendsPromptAndDecoding) {
  FakeServer s;
  json seen;
  bool malformed = false;
  s.raw().Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    reply(res, malformed ? json{{"wrong", 1}} : json{{"text", "generated"}});
  });
  HttpGenerator g("remote", s.endpoint(), fast());
  PromptSpec p;
  p.rendered = "PROMPT";
  EXPECT_EQ(g.complete(p, {4, 16}), "generated");
  EXPECT_EQ(seen["prompt"], "PROMPT");
  EXPECT_EQ(seen["beam_size"], 4);
  EXPECT_EQ(seen["max_new_tokens"], 16);

  malformed = true;
  EXPECT_THROW(g.complete(p, {4, 16}), ServiceError);
}

TEST(NliOracle, LabelsAndTruncation) {
  FakeServer s;
  std::string label = "neutral";
  json seen;
  s.raw().Post("/nli", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    reply(res, {{"label", label}, {"scores", {{label, 0.9}}}});
  });
  Document d;
  d.doc_id = "d";
  d.title = "Title";
  d.body = "one two three four five six";
  NliOracle o("nli", s.endpoint(), 4, fast());
  auto j = o.judge(d, "claim");
  EXPECT_EQ(j.score, 0);
  EXPECT_TRUE(j.truncated);
  EXPECT_EQ(seen["premise"], "Title\none two three");
  EXPECT_EQ(seen["hypothesis"], "claim");

  label = "entailment";
  NliOracle wide("nli", s.endpoint(), 400, fast());
  j = wide.judge(d, "claim");
  EXPECT_EQ(j.score, 1);
  EXPECT_FALSE(j.truncated);
  EXPECT_EQ(seen["premise"], "Title\none two three four five six");

  label = "unsure";
  EXPECT_THROW(wide.judge(d, "claim"), ServiceError);
}
