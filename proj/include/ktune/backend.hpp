#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ktune {

struct GenerationRequest {
    std::string model;
    std::string prompt;
    double temperature = 0.0;
    std::uint32_t n = 1;
    std::optional<std::uint32_t> top_k;
    std::uint32_t max_new_tokens = 32;
    std::string request_id;
    std::optional<std::uint64_t> seed;
};

// Anything that turns a completion request into n generated texts.
// Implementations throw BackendError on failure and must be safe to call concurrently.
class InferenceBackend {
public:
    virtual ~InferenceBackend() = default;
    virtual std::vector<std::string> generate(const GenerationRequest& request) = 0;
};

struct RetryPolicy {
    std::uint32_t max_attempts = 5;
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{10'000};
};

// Re-sends the same request (same request_id) with exponential backoff. Rethrows the
// last BackendError once the budget is spent. Replies with fewer than n choices count
// as failures.
std::vector<std::string> generate_with_retry(InferenceBackend& backend, const GenerationRequest& request,
                                             const RetryPolicy& policy);

struct HttpBackendConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8000
    std::string path = "/v1/completions";
    std::string auth_token;
    std::chrono::seconds timeout{120};
};

// Client for OpenAI-style completion servers:
// POST {model, prompt, temperature, top_k, n, max_tokens, seed?} -> {choices: [...]},
// where each choice is either a string or an object with a "text" field.
class HttpBackend final : public InferenceBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    std::vector<std::string> generate(const GenerationRequest& request) override;

private:
    HttpBackendConfig config_;
};

// Wire helpers shared by the client and the mock server.
std::string encode_completion_request(const GenerationRequest& request);
GenerationRequest decode_completion_request(const std::string& body);
std::string encode_completion_response(const std::vector<std::string>& choices);
std::vector<std::string> decode_completion_response(const std::string& body);

} // namespace ktune
