#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "synesthete/analysis/analysis.hpp"

namespace synesthete::llm {

class LlmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TimeoutError : public LlmError {
public:
    using LlmError::LlmError;
};

/// The backend answered with nothing usable (empty text, refusal, filter).
class EmptyCompletion : public LlmError {
public:
    using LlmError::LlmError;
};

/// Connection-level failure; worth one retry.
class TransportError : public LlmError {
public:
    using LlmError::LlmError;
};

enum class ModeKind { divergent, convergent };

const char* to_string(ModeKind kind);
ModeKind mode_kind_from_string(const std::string& name);

inline constexpr const char* kDefaultModel = "gpt-4-0125-preview";

struct CompletionRequest {
    std::string model = kDefaultModel;
    std::string prompt;
    double temperature = 0.8;
    int max_tokens = 80;
    std::uint64_t seed = 0;
    // Not sent over the wire; lets the mock vary by clip and mode.
    ModeKind mode = ModeKind::divergent;
    int clip_index = 0;
};

struct CompletionResult {
    std::string text;
    double latency_ms = 0;
    std::string backend_id;
    std::string scene_family;  // set by the mock only
};

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Text from the mock along with the scene family it was drawn from.
struct MockText {
    std::string text;
    std::string family;
};

/// Scene families the mock draws from, grouped by the lexicon cell they suit.
const std::vector<std::string>& scene_families(const std::string& quadrant);

/// Deterministic imagery sentence built as scene + setting (contour) +
/// lighting (dynamics) + a detail clause. Divergent mode picks the scene
/// with a generator keyed by (clip_index, mode) from the cell's families
/// plus a neighbouring cell's; convergent mode keeps `previous_family` when
/// one is given and only changes the detail.
MockText mock_completion(const analysis::MusicFeatures& features, const analysis::EmotionEstimate& emotion,
                         ModeKind mode, int clip_index, const std::string* previous_family = nullptr);

/// Answers every template from a local analysis of the ABC in the prompt.
/// Keeps the last scene family so convergent requests stay on theme.
class MockBackend : public CompletionBackend {
public:
    CompletionResult complete(const CompletionRequest& request) override;
    std::string id() const override { return "mock"; }

    std::optional<std::string> last_family() const;
    void reset();

private:
    mutable std::mutex mutex_;
    std::optional<std::string> last_family_;
};

/// Replays recorded request/response pairs, matched on the exact prompt.
class FixtureBackend : public CompletionBackend {
public:
    struct Entry {
        std::string prompt;
        std::string text;
        double latency_ms = 0;
    };

    explicit FixtureBackend(std::vector<Entry> entries);
    static FixtureBackend load(const std::filesystem::path& path);
    static FixtureBackend from_json(const nlohmann::json& j);

    CompletionResult complete(const CompletionRequest& request) override;
    std::string id() const override { return "fixture"; }

private:
    std::vector<Entry> entries_;
};

}  // namespace synesthete::llm
