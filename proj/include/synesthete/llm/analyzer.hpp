#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

#include "synesthete/llm/backend.hpp"
#include "synesthete/llm/prompts.hpp"

namespace synesthete::llm {

struct GenerationMode {
    ModeKind kind = ModeKind::divergent;
    double temperature = 0.8;

    bool operator==(const GenerationMode&) const = default;
};

inline constexpr double kDivergentTemperature = 0.8;
inline constexpr double kConvergentTemperature = 0.4;

/// Holds the active mode for one session. New sessions start divergent.
class ModeController {
public:
    explicit ModeController(double divergent = kDivergentTemperature, double convergent = kConvergentTemperature);

    GenerationMode current() const;
    GenerationMode set(ModeKind kind);
    double temperature_for(ModeKind kind) const;

private:
    mutable std::mutex mutex_;
    double divergent_;
    double convergent_;
    ModeKind kind_ = ModeKind::divergent;
};

inline constexpr int kImageryWordBudget = 80;

/// Cuts `text` to at most `max_words` whitespace-delimited words, ending at
/// the last sentence boundary inside the limit when there is one.
std::string truncate_to_budget(const std::string& text, int max_words = kImageryWordBudget);

std::size_t word_count(const std::string& text);

struct ImageryOptions {
    std::string model = kDefaultModel;
    std::chrono::milliseconds timeout{10'000};  // zero disables the watchdog
    std::shared_ptr<CompletionBackend> fallback;  // usually a MockBackend; null disables fallback
    int clip_index = 0;
    std::uint64_t seed = 0;
};

struct ImageryOutcome {
    std::string description;  // within the word budget
    CompletionRequest request;
    CompletionResult result;  // raw result from whichever backend answered
    bool fallback = false;
    std::string error;        // why the primary backend was abandoned
};

/// Sends a template prompt and waits at most `timeout`. Throws TimeoutError,
/// EmptyCompletion or another LlmError.
CompletionResult ask(CompletionBackend& backend, const std::shared_ptr<CompletionBackend>& owner,
                     const CompletionRequest& request, std::chrono::milliseconds timeout);

/// Imagery prompt through `backend`, budget enforced. Failures of the
/// primary backend degrade to `options.fallback` with the outcome flagged;
/// without a fallback they propagate.
ImageryOutcome describe_imagery(const std::string& abc_text, const GenerationMode& mode,
                                const std::shared_ptr<CompletionBackend>& backend, const ImageryOptions& options = {});

}  // namespace synesthete::llm
