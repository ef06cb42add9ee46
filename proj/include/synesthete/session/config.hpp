#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "synesthete/abc/codec.hpp"
#include "synesthete/image/image.hpp"
#include "synesthete/image/pacing.hpp"
#include "synesthete/llm/backend.hpp"

namespace synesthete::session {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LlmConfig {
    std::string backend = "mock";  // mock | fixture | live
    std::string model = llm::kDefaultModel;
    std::string url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string fixture;           // required for the fixture backend
    double timeout_s = 10;
    bool mock_fallback = true;
    std::uint64_t seed = 0;
};

struct ImageConfig {
    std::string backend = "mock";  // mock | live
    std::string url = "http://127.0.0.1:7860";
    std::string path = "/generate";
    int steps = 1;
    double timeout_s = 30;
    image::ImageSize size;
    image::StyleTag style = image::StyleTag::photorealistic;
    std::uint64_t seed = 0;
};

struct SessionConfig {
    double window_length_s = 10;
    abc::Meter meter;
    llm::ModeKind initial_mode = llm::ModeKind::divergent;
    double divergent_temperature = 0.8;
    double convergent_temperature = 0.4;
    LlmConfig llm;
    ImageConfig image;
    image::Cadence cadence;
    double smoothing = 0.5;
    double minor_delta = 0.3;
    std::string clause_table;  // empty: built-in table
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir = "sessions";
};

/// Strict parse: unknown keys at any level, wrong types and out-of-range
/// values throw ConfigError. Missing keys take their defaults.
SessionConfig config_from_json(const nlohmann::json& j);
SessionConfig load_config(const std::filesystem::path& path);

/// Complete snapshot, every field present.
nlohmann::json config_to_json(const SessionConfig& config);

}  // namespace synesthete::session
