#include "ktune/backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <thread>

#include "ktune/error.hpp"

namespace ktune {

using nlohmann::json;

std::vector<std::string> generate_with_retry(InferenceBackend& backend, const GenerationRequest& request,
                                             const RetryPolicy& policy) {
    auto backoff = policy.initial_backoff;
    const std::uint32_t attempts = std::max<std::uint32_t>(1, policy.max_attempts);
    for (std::uint32_t attempt = 1;; ++attempt) {
        try {
            auto out = backend.generate(request);
            if (out.size() < request.n) {
                throw BackendError("ShortReply", "request " + request.request_id + " asked for " +
                                                     std::to_string(request.n) + " choices, got " +
                                                     std::to_string(out.size()));
            }
            out.resize(request.n);
            return out;
        } catch (const BackendError& e) {
            if (attempt >= attempts) {
                throw BackendError("BackendUnavailable", "request " + request.request_id + " failed after " +
                                                             std::to_string(attempt) + " attempt(s): " + e.what());
            }
        }
        if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
        backoff = std::min(policy.max_backoff,
                           std::chrono::milliseconds(static_cast<std::int64_t>(backoff.count() * policy.multiplier)));
    }
}

std::string encode_completion_request(const GenerationRequest& r) {
    json j{{"model", r.model},           {"prompt", r.prompt}, {"temperature", r.temperature},
           {"n", r.n},                   {"max_tokens", r.max_new_tokens}};
    // -1 is the "disabled" value understood by common open servers.
    j["top_k"] = r.top_k ? static_cast<std::int64_t>(*r.top_k) : -1;
    if (r.seed) j["seed"] = *r.seed;
    return j.dump();
}

GenerationRequest decode_completion_request(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ValidationError("MalformedRequest", e.what());
    }
    try {
        GenerationRequest r;
        r.model = j.value("model", "");
        r.prompt = j.at("prompt").get<std::string>();
        r.temperature = j.value("temperature", 1.0);
        r.n = j.value("n", 1u);
        r.max_new_tokens = j.value("max_tokens", 16u);
        const auto top_k = j.value("top_k", std::int64_t{-1});
        if (top_k > 0) r.top_k = static_cast<std::uint32_t>(top_k);
        if (j.contains("seed") && !j["seed"].is_null()) r.seed = j["seed"].get<std::uint64_t>();
        return r;
    } catch (const json::exception& e) {
        throw ValidationError("MalformedRequest", e.what());
    }
}

std::string encode_completion_response(const std::vector<std::string>& choices) {
    json arr = json::array();
    for (std::size_t i = 0; i < choices.size(); ++i) {
        arr.push_back({{"index", i}, {"text", choices[i]}});
    }
    return json{{"object", "text_completion"}, {"choices", arr}}.dump();
}

std::vector<std::string> decode_completion_response(const std::string& body) {
    try {
        const auto j = json::parse(body);
        std::vector<std::string> out;
        for (const auto& c : j.at("choices")) {
            out.push_back(c.is_string() ? c.get<std::string>() : c.at("text").get<std::string>());
        }
        return out;
    } catch (const json::exception& e) {
        throw BackendError("MalformedReply", e.what());
    }
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ValidationError("MissingBackendUrl", "backend URL is empty");
}

std::vector<std::string> HttpBackend::generate(const GenerationRequest& request) {
    // httplib clients are not safe for concurrent use; one per call keeps this re-entrant.
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + config_.auth_token);
    auto res = client.Post(config_.path, headers, encode_completion_request(request), "application/json");
    if (!res) {
        throw BackendError("TransportError", config_.base_url + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw BackendError("HttpStatus", config_.base_url + " returned HTTP " + std::to_string(res->status) + ": " +
                                             res->body.substr(0, 200));
    }
    return decode_completion_response(res->body);
}

} // namespace ktune
