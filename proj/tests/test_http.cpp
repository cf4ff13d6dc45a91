#include <cstring>

#include "doctest.h"
#include "qattack/error.hpp"
#include "qattack/http_model.hpp"
#include "stub_server.hpp"

using namespace qattack;
using nlohmann::json;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kRuntime;
}

ModelEndpoint endpoint_for(const StubServer& s, size_t max_batch = 16) {
  ModelEndpoint ep;
  ep.base_url = s.url();
  ep.timeout_seconds = 5.0;
  ep.max_batch = max_batch;
  return ep;
}

const RetryPolicy kNoWait{1, 0.001};

}  // namespace

TEST_SUITE("http") {

TEST_CASE("request encoding") {
  const std::vector<WireItem> items = {{"Who?", "Ann met Bob."}};
  const auto doc = json::parse(encode_request(items, 3));
  CHECK(doc["top_k"] == 3);
  CHECK(doc["items"][0]["question"] == "Who?");
  CHECK(doc["items"][0]["context"] == "Ann met Bob.");
}

TEST_CASE("spans round-trip bit-exactly") {
  const double p1 = 0.1 + 0.2;  // not a short decimal
  const double p2 = 1.0 - p1;
  StubServer server(fixed_spans(json::array(
      {{{"text", "Bob"}, {"char_start", 8}, {"char_end", 11}, {"probability", p1}},
       {{"text", "Ann"}, {"char_start", 0}, {"char_end", 3}, {"probability", p2}}})));
  const std::vector<WireItem> items = {{"Who?", "Ann met Bob."}};
  const auto out = http_predict(endpoint_for(server), items, 2, kNoWait);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].spans.size() == 2);
  CHECK(std::memcmp(&out[0].spans[0].probability, &p1, sizeof p1) == 0);
  CHECK(std::memcmp(&out[0].spans[1].probability, &p2, sizeof p2) == 0);
  CHECK(out[0].spans[0].text == "Bob");
  CHECK(out[0].spans[0].char_start == 8);
  CHECK(out[0].spans[0].char_end == 11);
}

TEST_CASE("client re-sorts and renormalizes") {
  StubServer server(fixed_spans(json::array(
      {{{"text", "Ann"}, {"char_start", 0}, {"char_end", 3}, {"probability", 0.1}},
       {{"text", "Bob"}, {"char_start", 8}, {"char_end", 11}, {"probability", 0.3}}})));
  const HttpModel model(endpoint_for(server), kNoWait);
  const auto d = model.predict(tokenize("Who?"), tokenize("Ann met Bob."), 5);
  REQUIRE(d.size() == 2);
  CHECK(d.top().text == "Bob");
  CHECK(d.top().start_token == 2);
  CHECK(d.spans()[0].probability == doctest::Approx(0.75));
  CHECK(d.spans()[1].probability == doctest::Approx(0.25));
}

TEST_CASE("a single echoed span has probability one") {
  StubServer server(fixed_spans(json::array(
      {{{"text", "met"}, {"char_start", 4}, {"char_end", 7}, {"probability", 0.2}}})));
  const HttpModel model(endpoint_for(server), kNoWait);
  const auto d = model.predict(tokenize("Who?"), tokenize("Ann met Bob."), 1);
  REQUIRE(d.size() == 1);
  CHECK(d.top().probability == 1.0);
}

TEST_CASE("code point offsets map to bytes") {
  // "Zoë met Bob." : Bob starts at code point 8, byte 9.
  StubServer server(fixed_spans(json::array(
      {{{"text", "Bob"}, {"char_start", 8}, {"char_end", 11}, {"probability", 1.0}}})));
  const HttpModel model(endpoint_for(server), kNoWait);
  const auto d = model.predict(tokenize("Who?"), tokenize("Zo\xc3\xab met Bob."), 1);
  CHECK(d.top().text == "Bob");
}

TEST_CASE("batches are split by max_batch") {
  StubServer server(fixed_spans(json::array(
      {{{"text", "Ann"}, {"char_start", 0}, {"char_end", 3}, {"probability", 1.0}}})));
  const std::vector<WireItem> items(3, WireItem{"Who?", "Ann met Bob."});
  const auto out = http_predict(endpoint_for(server, 2), items, 1, kNoWait);
  CHECK(out.size() == 3);
  CHECK(server.batch_sizes() == std::vector<size_t>{2, 1});
}

TEST_CASE("bearer token is sent") {
  StubServer server(fixed_spans(json::array(
      {{{"text", "Ann"}, {"char_start", 0}, {"char_end", 3}, {"probability", 1.0}}})));
  auto ep = endpoint_for(server);
  ep.auth_token = "s3cret";
  const std::vector<WireItem> items = {{"Who?", "Ann met Bob."}};
  http_predict(ep, items, 1, kNoWait);
  CHECK(server.auth_headers() == std::vector<std::string>{"Bearer s3cret"});
}

TEST_CASE("schema errors") {
  const std::vector<WireItem> one = {{"Who?", "Ann met Bob."}};
  SUBCASE("probability out of range") {
    StubServer server(fixed_spans(json::array(
        {{{"text", "Ann"}, {"char_start", 0}, {"char_end", 3}, {"probability", 1.2}}})));
    CHECK(kind_of([&] { http_predict(endpoint_for(server), one, 1, kNoWait); }) ==
          ErrorKind::kSchema);
  }
  SUBCASE("misaligned results") {
    StubServer server([](const json&) {
      return StubServer::Reply{200, R"({"results":[{"spans":[]},{"spans":[]}]})"};
    });
    CHECK(kind_of([&] { http_predict(endpoint_for(server), one, 1, kNoWait); }) ==
          ErrorKind::kSchema);
  }
  SUBCASE("missing field") {
    StubServer server(fixed_spans(json::array({{{"text", "Ann"}, {"char_start", 0}}})));
    CHECK(kind_of([&] { http_predict(endpoint_for(server), one, 1, kNoWait); }) ==
          ErrorKind::kSchema);
  }
  SUBCASE("not json") {
    StubServer server([](const json&) { return StubServer::Reply{200, "<html>"}; });
    CHECK(kind_of([&] { http_predict(endpoint_for(server), one, 1, kNoWait); }) ==
          ErrorKind::kSchema);
  }
  SUBCASE("span past the context, reported with its batch index") {
    StubServer server(fixed_spans(json::array(
        {{{"text", "x"}, {"char_start", 40}, {"char_end", 41}, {"probability", 1.0}}})));
    const HttpModel model(endpoint_for(server), kNoWait);
    try {
      model.predict(tokenize("Who?"), tokenize("Ann met Bob."), 1);
      FAIL("expected an error");
    } catch (const BatchError& e) {
      CHECK(e.kind() == ErrorKind::kSchema);
      CHECK(e.index() == 0);
    }
  }
}

TEST_CASE("non-2xx status carries the server message") {
  StubServer server([](const json&) { return StubServer::Reply{503, R"({"error":"overloaded"})"}; });
  const std::vector<WireItem> one = {{"Who?", "Ann met Bob."}};
  try {
    http_predict(endpoint_for(server), one, 1, kNoWait);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kHttpStatus);
    CHECK(std::string(e.what()).find("overloaded") != std::string::npos);
  }
}

TEST_CASE("unreachable endpoint is a transport error after retries") {
  ModelEndpoint ep;
  ep.base_url = "http://127.0.0.1:1";
  ep.timeout_seconds = 1.0;
  const std::vector<WireItem> one = {{"Who?", "Ann met Bob."}};
  const ErrorKind k = kind_of([&] { http_predict(ep, one, 1, {2, 0.001}); });
  CHECK((k == ErrorKind::kTransport || k == ErrorKind::kTimeout));
}

TEST_CASE("endpoint validation") {
  ModelEndpoint ep;
  ep.base_url = "ftp://x";
  CHECK_THROWS_AS(ep.validate(), Error);
  ep.base_url = "http://x";
  ep.max_batch = 0;
  CHECK_THROWS_AS(ep.validate(), Error);
}

}  // TEST_SUITE
