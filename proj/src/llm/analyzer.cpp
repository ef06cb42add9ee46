#include "synesthete/llm/analyzer.hpp"

#include <future>
#include <sstream>
#include <thread>

namespace synesthete::llm {

ModeController::ModeController(double divergent, double convergent) : divergent_(divergent), convergent_(convergent)
{
    if (!(divergent >= 0 && divergent <= 2) || !(convergent >= 0 && convergent <= 2)) {
        throw std::invalid_argument("temperatures must lie in [0, 2]");
    }
}

GenerationMode ModeController::current() const
{
    std::lock_guard lock(mutex_);
    return GenerationMode{kind_, kind_ == ModeKind::divergent ? divergent_ : convergent_};
}

GenerationMode ModeController::set(ModeKind kind)
{
    std::lock_guard lock(mutex_);
    kind_ = kind;
    return GenerationMode{kind_, kind_ == ModeKind::divergent ? divergent_ : convergent_};
}

double ModeController::temperature_for(ModeKind kind) const
{
    std::lock_guard lock(mutex_);
    return kind == ModeKind::divergent ? divergent_ : convergent_;
}

std::size_t word_count(const std::string& text)
{
    std::istringstream is(text);
    std::size_t n = 0;
    std::string w;
    while (is >> w) ++n;
    return n;
}

std::string truncate_to_budget(const std::string& text, int max_words)
{
    // Word spans in the original text so the kept part is byte-identical.
    std::vector<std::pair<std::size_t, std::size_t>> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        const std::size_t b = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        words.emplace_back(b, i);
    }
    if (words.empty()) return {};
    const auto limit = static_cast<std::size_t>(std::max(0, max_words));
    if (words.size() <= limit) return text.substr(words.front().first, words.back().second - words.front().first);
    if (limit == 0) return {};

    std::size_t cut = words[limit - 1].second;
    for (std::size_t k = limit; k-- > 0;) {
        const char last = text[words[k].second - 1];
        const char before = words[k].second >= 2 ? text[words[k].second - 2] : ' ';
        const bool closes = last == '.' || last == '!' || last == '?' ||
                            ((last == '"' || last == '\'' || last == ')') && (before == '.' || before == '!' || before == '?'));
        if (closes) {
            cut = words[k].second;
            break;
        }
    }
    return text.substr(words.front().first, cut - words.front().first);
}

CompletionResult ask(CompletionBackend& backend, const std::shared_ptr<CompletionBackend>& owner,
                     const CompletionRequest& request, std::chrono::milliseconds timeout)
{
    if (timeout.count() <= 0 || !owner) return backend.complete(request);

    // The call runs on its own thread so a hung backend cannot hold up the
    // caller; an abandoned call finishes in the background and is ignored.
    auto promise = std::make_shared<std::promise<CompletionResult>>();
    auto future = promise->get_future();
    std::thread([owner, request, promise] {
        try {
            promise->set_value(owner->complete(request));
        } catch (...) {
            promise->set_exception(std::current_exception());
        }
    }).detach();
    if (future.wait_for(timeout) == std::future_status::timeout) {
        throw TimeoutError("completion timed out after " + std::to_string(timeout.count()) + " ms");
    }
    return future.get();
}

ImageryOutcome describe_imagery(const std::string& abc_text, const GenerationMode& mode,
                                const std::shared_ptr<CompletionBackend>& backend, const ImageryOptions& options)
{
    ImageryOutcome out;
    CompletionRequest& req = out.request;
    req.model = options.model;
    req.prompt = build_prompt(TemplateId::imagery, abc_text);
    req.temperature = mode.temperature;
    req.max_tokens = prompt_template(TemplateId::imagery).token_budget;
    req.seed = options.seed;
    req.mode = mode.kind;
    req.clip_index = options.clip_index;

    try {
        if (!backend) throw LlmError("no completion backend configured");
        out.result = ask(*backend, backend, req, options.timeout);
        if (out.result.text.find_first_not_of(" \t\r\n") == std::string::npos) {
            throw EmptyCompletion("completion is empty");
        }
    } catch (const LlmError& e) {
        if (!options.fallback) throw;
        out.fallback = true;
        out.error = e.what();
        out.result = options.fallback->complete(req);
    }
    out.description = truncate_to_budget(out.result.text, kImageryWordBudget);
    return out;
}

}  // namespace synesthete::llm
