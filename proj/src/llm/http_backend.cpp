#include "synesthete/llm/http_backend.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace synesthete::llm {

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config))
{
    if (config_.api_key.empty()) {
        if (const char* key = std::getenv("OPENAI_API_KEY")) config_.api_key = key;
    }
}

std::string HttpBackend::request_body(const CompletionRequest& request)
{
    nlohmann::json body = {
        {"model", request.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"seed", request.seed},
    };
    return body.dump();
}

std::string HttpBackend::parse_response(const std::string& body)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw LlmError(std::string("malformed completion response: ") + e.what());
    }
    if (j.contains("error")) throw LlmError("backend error: " + j.at("error").dump());
    if (!j.contains("choices") || j.at("choices").empty()) throw EmptyCompletion("completion has no choices");
    const auto& choice = j.at("choices").at(0);
    if (choice.value("finish_reason", "") == "content_filter") throw EmptyCompletion("completion was filtered");
    const auto& message = choice.at("message");
    if (message.contains("refusal") && message.at("refusal").is_string()) {
        throw EmptyCompletion("backend refused: " + message.at("refusal").get<std::string>());
    }
    const auto content = message.value("content", nlohmann::json());
    if (!content.is_string() || content.get<std::string>().find_first_not_of(" \t\r\n") == std::string::npos) {
        throw EmptyCompletion("completion is empty");
    }
    return content.get<std::string>();
}

CompletionResult HttpBackend::complete(const CompletionRequest& request)
{
    const auto start = std::chrono::steady_clock::now();
    const std::string body = request_body(request);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);

    for (int attempt = 0; attempt < 2; ++attempt) {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

        auto res = client.Post(config_.path, headers, body, "application/json");
        const auto elapsed = std::chrono::steady_clock::now() - start;
        if (!res) {
            const auto err = res.error();
            // A read timeout surfaces as Error::Read; tell it apart by the clock.
            if (err == httplib::Error::ConnectionTimeout || elapsed + std::chrono::milliseconds(10) >= config_.timeout) {
                throw TimeoutError("completion timed out after " +
                                   std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count()) +
                                   " ms");
            }
            if (attempt == 0) continue;
            throw TransportError("completion request failed: " + httplib::to_string(err));
        }
        if (res->status != 200) {
            throw LlmError("completion request returned HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        CompletionResult result;
        result.text = parse_response(res->body);
        result.backend_id = id();
        result.latency_ms = std::chrono::duration<double, std::milli>(elapsed).count();
        return result;
    }
    throw TransportError("completion request failed");
}

}  // namespace synesthete::llm
