#pragma once

#include <chrono>
#include <string>

#include "synesthete/llm/backend.hpp"

namespace synesthete::llm {

struct HttpBackendConfig {
    std::string base_url = "https://api.openai.com";  // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string api_key;                               // empty: read OPENAI_API_KEY
    std::chrono::milliseconds timeout{10'000};
};

/// OpenAI-compatible chat completion client. A transport failure is retried
/// once; a timeout is not.
class HttpBackend : public CompletionBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    CompletionResult complete(const CompletionRequest& request) override;
    std::string id() const override { return "http"; }

    /// Request body for the wire, exposed for tests.
    static std::string request_body(const CompletionRequest& request);

    /// Extracts the completion text; throws EmptyCompletion or LlmError.
    static std::string parse_response(const std::string& body);

private:
    HttpBackendConfig config_;
};

}  // namespace synesthete::llm
