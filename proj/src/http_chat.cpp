#include "divek/http_chat.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "divek/hashing.hpp"
#include "divek/parallel.hpp"

namespace divek {
namespace {

std::string mime_for(const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == "png") return "image/png";
  if (ext == "webp") return "image/webp";
  if (ext == "gif") return "image/gif";
  return "image/jpeg";
}

std::vector<std::string> choices_of(const Json& response) {
  if (!response.contains("choices") || !response["choices"].is_array()) {
    throw TransportError("response has no choices array");
  }
  const auto& choices = response["choices"];
  std::vector<std::string> out(choices.size());
  std::vector<bool> seen(choices.size(), false);
  for (std::size_t i = 0; i < choices.size(); ++i) {
    const auto& ch = choices[i];
    std::size_t slot = i;
    if (ch.contains("index") && ch["index"].is_number_unsigned()) {
      slot = ch["index"].get<std::size_t>();
      if (slot >= out.size() || seen[slot]) slot = i;
    }
    seen[slot] = true;
    const Json* content = nullptr;
    if (ch.contains("message") && ch["message"].contains("content")) content = &ch["message"]["content"];
    out[slot] = content && content->is_string() ? content->get<std::string>() : std::string();
  }
  return out;
}

}  // namespace

HttpStatusError::HttpStatusError(int status, const std::string& body)
    : TransportError("HTTP " + std::to_string(status) + ": " + body.substr(0, 300)), status_(status) {}

ChatClient::ChatClient(BackendDescriptor descriptor, std::string api_key)
    : descriptor_(std::move(descriptor)), api_key_(std::move(api_key)) {
  descriptor_.validate();
  const std::string& url = descriptor_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must start with http:// or https://");
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/chat/completions";
}

std::string ChatClient::fetch_mode() const {
  switch (fetch_mode_.load()) {
    case 1: return "batched";
    case 2: return "single";
    default: return "";
  }
}

Json ChatClient::build_payload(const ChatRequest& request, int n,
                               std::optional<std::uint64_t> seed) const {
  Json content;
  if (request.image_url) {
    content = Json::array();
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", *request.image_url}}}});
    content.push_back({{"type", "text"}, {"text", request.text}});
  } else {
    content = request.text;
  }
  Json payload;
  payload["model"] = descriptor_.model;
  payload["messages"] = Json::array({Json{{"role", "user"}, {"content", content}}});
  payload["temperature"] = request.params.temperature;
  payload["top_p"] = request.params.top_p;
  payload["max_tokens"] = request.params.max_new_tokens;
  payload["n"] = n;
  if (seed) payload["seed"] = *seed;
  if (descriptor_.supports_repetition_penalty) {
    payload["repetition_penalty"] = request.params.repetition_penalty;
  }
  return payload;
}

Json ChatClient::post_once(const Json& payload) {
  httplib::Client cli(scheme_host_port_);
  cli.set_connection_timeout(std::chrono::seconds(10));
  cli.set_read_timeout(descriptor_.timeout);
  cli.set_write_timeout(descriptor_.timeout);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = cli.Post(path_, headers, payload.dump(), "application/json");
  if (!res) throw TransportError("request to " + scheme_host_port_ + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw HttpStatusError(res->status, res->body);
  try {
    return Json::parse(res->body);
  } catch (const Json::parse_error&) {
    throw TransportError("response body is not JSON");
  }
}

Json ChatClient::post_with_retry(const Json& payload) {
  const auto& retry = descriptor_.retry;
  std::string last_error;
  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    try {
      return post_once(payload);
    } catch (const HttpStatusError& e) {
      if (e.status() != 429 && e.status() < 500) throw;
      last_error = e.what();
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt < retry.max_attempts) {
      const double scale = std::pow(retry.backoff_multiplier, attempt - 1);
      std::this_thread::sleep_for(std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(retry.initial_backoff.count()) * scale)));
    }
  }
  throw TransportError("giving up after " + std::to_string(retry.max_attempts) + " attempts: " + last_error);
}

std::vector<std::string> ChatClient::complete(const ChatRequest& request) {
  const int K = request.params.K;
  if (K < 1) throw PreconditionError("K must be >= 1");
  if (!descriptor_.supports_repetition_penalty && request.params.repetition_penalty != 1.0 &&
      dropped_warnings_++ == 0) {
    std::cerr << "warning: endpoint does not advertise repetition_penalty; dropping it\n";
  }

  if (K == 1) {
    auto out = choices_of(post_with_retry(build_payload(request, 1, request.params.seed)));
    if (out.empty()) throw TransportError("response carried no choices");
    out.resize(1);
    return out;
  }

  if (descriptor_.batch_n && fetch_mode_.load() != 2) {
    try {
      auto out = choices_of(post_with_retry(build_payload(request, K, request.params.seed)));
      if (static_cast<int>(out.size()) >= K) {
        out.resize(K);
        fetch_mode_ = 1;
        return out;
      }
    } catch (const HttpStatusError& e) {
      if (e.status() != 400 && e.status() != 422) throw;
    }
    fetch_mode_ = 2;
  }

  std::vector<std::string> out(K);
  parallel_for(static_cast<std::size_t>(K), descriptor_.concurrency, [&](std::size_t i) {
    std::optional<std::uint64_t> seed;
    if (request.params.seed) seed = *request.params.seed + i;
    auto choices = choices_of(post_with_retry(build_payload(request, 1, seed)));
    if (choices.empty()) throw TransportError("response carried no choices");
    out[i] = std::move(choices.front());
  });
  if (fetch_mode_.load() == 0) fetch_mode_ = 2;
  return out;
}

HttpChatBackend::HttpChatBackend(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}

std::vector<std::string> HttpChatBackend::generate(const ImageRef& image, const QueryPrompt& query,
                                                   const SamplingParams& params) {
  ChatRequest req;
  req.text = query.rendered;
  req.params = params;
  switch (image.source) {
    case ImageSource::Url:
      req.image_url = image.uri;
      break;
    case ImageSource::FilePath:
      req.image_url = "data:" + mime_for(image.uri) + ";base64," + base64_encode(read_text_file(image.uri));
      break;
    case ImageSource::SyntheticWorldSample:
      break;
  }
  return client_->complete(req);
}

Json HttpChatBackend::describe() const {
  Json j = to_json(client_->descriptor());
  j["fetch_mode"] = client_->fetch_mode();
  return j;
}

std::string api_key_from_env(const BackendDescriptor& descriptor) {
  const char* v = std::getenv(descriptor.api_key_env.c_str());
  return v ? std::string(v) : std::string();
}

TextCompleter make_text_completer(std::shared_ptr<ChatClient> client) {
  return [client = std::move(client)](const std::string& prompt) {
    ChatRequest req;
    req.text = prompt;
    req.params = SamplingParams{}.greedy();
    req.params.repetition_penalty = 1.0;
    return client->complete(req).front();
  };
}

}  // namespace divek
