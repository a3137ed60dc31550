#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "divek/backend.hpp"
#include "divek/errors.hpp"
#include "divek/sampling.hpp"

namespace divek {

class HttpStatusError : public TransportError {
 public:
  HttpStatusError(int status, const std::string& body);
  int status() const { return status_; }

 private:
  int status_;
};

struct ChatRequest {
  std::string text;
  // http(s) URL or data: URL; omitted for text-only requests.
  std::optional<std::string> image_url;
  SamplingParams params;
};

/// Minimal client for the chat-completions wire shape:
///   POST {endpoint}/chat/completions
///   {model, messages:[{role:"user", content:[image_url?, text]}],
///    temperature, top_p, max_tokens, n, seed?, repetition_penalty?}
/// Retries transport failures, 429 and 5xx with exponential backoff.
class ChatClient {
 public:
  ChatClient(BackendDescriptor descriptor, std::string api_key);

  // Returns params.K completions in order. Uses one n=K request when
  // descriptor.batch_n is set and falls back to K single requests (bounded
  // by descriptor.concurrency) if the endpoint refuses n>1 or returns fewer
  // choices than asked.
  std::vector<std::string> complete(const ChatRequest& request);

  Json build_payload(const ChatRequest& request, int n, std::optional<std::uint64_t> seed) const;

  const BackendDescriptor& descriptor() const { return descriptor_; }
  // "batched", "single" or "" before the first multi-sample request.
  std::string fetch_mode() const;
  int dropped_parameter_warnings() const { return dropped_warnings_.load(); }

 private:
  Json post_with_retry(const Json& payload);
  Json post_once(const Json& payload);

  BackendDescriptor descriptor_;
  std::string api_key_;
  std::string scheme_host_port_;
  std::string path_;
  std::atomic<int> dropped_warnings_{0};
  std::atomic<int> fetch_mode_{0};  // 0 unknown, 1 batched, 2 single
};

/// InferenceBackend over a ChatClient. File-path images are inlined as
/// base64 data URLs; synthetic images are sent text-only.
class HttpChatBackend : public InferenceBackend {
 public:
  explicit HttpChatBackend(std::shared_ptr<ChatClient> client);

  std::vector<std::string> generate(const ImageRef& image, const QueryPrompt& query,
                                    const SamplingParams& params) override;
  Json describe() const override;

  ChatClient& client() { return *client_; }

 private:
  std::shared_ptr<ChatClient> client_;
};

// Reads the key named by descriptor.api_key_env; empty when unset.
std::string api_key_from_env(const BackendDescriptor& descriptor);

using TextCompleter = std::function<std::string(const std::string& prompt)>;

// Greedy single-completion text function, as used by the judge.
TextCompleter make_text_completer(std::shared_ptr<ChatClient> client);

// Builds the backend named by the descriptor. Confusion-world backends are
// returned without registered images.
std::shared_ptr<InferenceBackend> make_backend(const BackendDescriptor& descriptor,
                                               std::uint64_t seed);

}  // namespace divek
