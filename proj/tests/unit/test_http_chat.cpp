#include <httplib.h>

#include <atomic>
#include <mutex>
#include <thread>

#include "divek/errors.hpp"
#include "divek/hashing.hpp"
#include "divek/http_chat.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace divek;

namespace {

// Local chat-completions endpoint with scriptable failure modes.
class FakeEndpoint {
 public:
  std::atomic<int> requests{0};
  std::atomic<int> fail_first{0};     // answer the first N requests with fail_status
  int fail_status = 500;
  bool refuse_n = false;              // 400 for n > 1
  int short_by = 0;                   // batched replies carry n - short_by choices
  std::mutex mu;
  std::vector<Json> payloads;
  std::vector<std::string> auth;

  FakeEndpoint() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int idx = requests++;
      const Json body = Json::parse(req.body);
      {
        std::lock_guard lock(mu);
        payloads.push_back(body);
        auth.push_back(req.get_header_value("Authorization"));
      }
      if (idx < fail_first.load()) {
        res.status = fail_status;
        res.set_content("{\"error\":\"busy\"}", "application/json");
        return;
      }
      const int n = body.value("n", 1);
      if (refuse_n && n > 1) {
        res.status = 400;
        res.set_content("{\"error\":\"n not supported\"}", "application/json");
        return;
      }
      Json choices = Json::array();
      const std::string tag = body.contains("seed") ? std::to_string(body["seed"].get<std::uint64_t>()) : "x";
      for (int i = 0; i < n - (n > 1 ? short_by : 0); ++i) {
        choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", "s" + tag + "-" + std::to_string(i)}}}});
      }
      res.set_content(Json{{"choices", choices}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  BackendDescriptor descriptor() const {
    BackendDescriptor d;
    d.kind = BackendKind::HttpChat;
    d.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    d.model = "test-model";
    d.retry.initial_backoff = std::chrono::milliseconds(1);
    d.concurrency = 3;
    return d;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

ChatRequest request(int K) {
  ChatRequest r;
  r.text = "hello";
  r.params.K = K;
  r.params.seed = 100;
  return r;
}

}  // namespace

TEST_CASE("batched request returns K completions in order") {
  FakeEndpoint ep;
  ChatClient client(ep.descriptor(), "secret");
  const auto out = client.complete(request(4));
  CHECK(out == std::vector<std::string>{"s100-0", "s100-1", "s100-2", "s100-3"});
  CHECK(ep.requests == 1);
  CHECK(client.fetch_mode() == "batched");
  CHECK(ep.auth.front() == "Bearer secret");
  const Json& p = ep.payloads.front();
  CHECK(p["model"] == "test-model");
  CHECK(p["n"] == 4);
  CHECK(p["temperature"] == 1.0);
  CHECK(p["top_p"] == 0.95);
  CHECK(p["max_tokens"] == 1024);
  CHECK_FALSE(p.contains("repetition_penalty"));
  CHECK(client.dropped_parameter_warnings() == 1);
}

TEST_CASE("refused n falls back to one request per sample") {
  FakeEndpoint ep;
  ep.refuse_n = true;
  ChatClient client(ep.descriptor(), "");
  const auto out = client.complete(request(3));
  CHECK(out == std::vector<std::string>{"s100-0", "s101-0", "s102-0"});
  CHECK(ep.requests == 4);
  CHECK(client.fetch_mode() == "single");
  CHECK(ep.auth.front().empty());
  client.complete(request(2));
  CHECK(ep.requests == 6);  // no second batched attempt
}

TEST_CASE("short batched responses also fall back") {
  FakeEndpoint ep;
  ep.short_by = 1;
  ChatClient client(ep.descriptor(), "k");
  CHECK(client.complete(request(3)) == std::vector<std::string>{"s100-0", "s101-0", "s102-0"});
  CHECK(client.fetch_mode() == "single");
}

TEST_CASE("server errors are retried with backoff") {
  FakeEndpoint ep;
  ep.fail_first = 2;
  ChatClient client(ep.descriptor(), "k");
  CHECK(client.complete(request(1)).front() == "s100-0");
  CHECK(ep.requests == 3);

  FakeEndpoint limited;
  limited.fail_first = 1;
  limited.fail_status = 429;
  ChatClient c2(limited.descriptor(), "k");
  CHECK(c2.complete(request(1)).size() == 1);
  CHECK(limited.requests == 2);
}

TEST_CASE("persistent failures surface as transport errors") {
  FakeEndpoint ep;
  ep.fail_first = 100;
  ChatClient client(ep.descriptor(), "k");
  CHECK_THROWS_AS(client.complete(request(1)), TransportError);
  CHECK(ep.requests == 3);

  FakeEndpoint bad;
  bad.fail_first = 100;
  bad.fail_status = 401;
  ChatClient c2(bad.descriptor(), "k");
  CHECK_THROWS_AS(c2.complete(request(1)), HttpStatusError);
  CHECK(bad.requests == 1);
}

TEST_CASE("unreachable endpoint") {
  BackendDescriptor d;
  d.kind = BackendKind::HttpChat;
  d.endpoint = "http://127.0.0.1:9/v1";
  d.model = "m";
  d.retry.max_attempts = 2;
  d.retry.initial_backoff = std::chrono::milliseconds(1);
  ChatClient client(d, "");
  CHECK_THROWS_AS(client.complete(request(1)), TransportError);
}

TEST_CASE("repetition penalty is forwarded when supported") {
  FakeEndpoint ep;
  auto d = ep.descriptor();
  d.supports_repetition_penalty = true;
  ChatClient client(d, "k");
  client.complete(request(2));
  CHECK(ep.payloads.front()["repetition_penalty"] == 1.1);
  CHECK(client.dropped_parameter_warnings() == 0);
}

TEST_CASE("images are attached as data urls or passed through") {
  FakeEndpoint ep;
  auto client = std::make_shared<ChatClient>(ep.descriptor(), "k");
  HttpChatBackend backend(client);
  divek::testing::TempDir dir;
  write_text_file(dir / "bird.png", "PNGDATA");
  ImageRef file_img{"f", ImageSource::FilePath, Split::Base, (dir / "bird.png").string()};
  ImageRef url_img{"u", ImageSource::Url, Split::Base, "https://example.org/b.jpg"};
  QueryPrompt q{"step1", "what bird?", std::nullopt};
  SamplingParams p;
  p.K = 1;
  backend.generate(file_img, q, p);
  backend.generate(url_img, q, p);
  backend.generate(divek::testing::test_image("s"), q, p);
  const auto& c0 = ep.payloads[0]["messages"][0]["content"];
  CHECK(c0[0]["image_url"]["url"] == "data:image/png;base64," + base64_encode("PNGDATA"));
  CHECK(c0[1]["text"] == "what bird?");
  CHECK(ep.payloads[1]["messages"][0]["content"][0]["image_url"]["url"] == "https://example.org/b.jpg");
  CHECK(ep.payloads[2]["messages"][0]["content"] == "what bird?");
}

TEST_CASE("text completer used by the judge is greedy") {
  FakeEndpoint ep;
  auto complete = make_text_completer(std::make_shared<ChatClient>(ep.descriptor(), "k"));
  CHECK(complete("prompt") == "sx-0");
  CHECK(ep.payloads.front()["temperature"] == 0.0);
  CHECK(ep.payloads.front()["n"] == 1);
}
