#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synesthete/analysis/analysis.hpp"
#include "synesthete/image/image.hpp"
#include "synesthete/image/pacing.hpp"
#include "synesthete/llm/analyzer.hpp"
#include "synesthete/midi/events.hpp"
#include "synesthete/session/config.hpp"
#include "synesthete/visual/mapping.hpp"

namespace synesthete::session {

using midi::Micros;

inline constexpr const char* kRecordSchema = "synesthete.session/1";

struct Backends {
    std::shared_ptr<llm::CompletionBackend> llm;
    std::shared_ptr<llm::CompletionBackend> fallback;  // null: LLM failures skip the clip
    std::shared_ptr<image::ImageBackend> image;
};

/// Backends named by the config. Throws ConfigError when one cannot be built.
Backends make_backends(const SessionConfig& config);

/// Malformed or unknown control command.
class ControlError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// "20261015-142233-3fa9c1": UTC time plus random suffix.
std::string make_session_id();

/// One performance: owns the pipeline state (mode, style, cadence, pacing,
/// smoothed visual params) and the append-only record. Every method is safe
/// to call from any thread; clips must arrive from a single producer.
class Session {
public:
    using Publisher = std::function<void(const std::string& session, const std::string& type, const nlohmann::json&)>;

    Session(std::string id, SessionConfig config, Backends backends, std::filesystem::path dir,
            Publisher publisher = {});

    const std::string& id() const { return id_; }
    const SessionConfig& config() const { return config_; }
    const std::filesystem::path& dir() const { return dir_; }
    image::ImageStore& store() { return store_; }

    /// clip -> analyze -> ABC -> imagery text (+ visual clauses) -> image ->
    /// pacing. Returns the logged entry. Stage failures are logged and the
    /// session carries on.
    nlohmann::json process_clip(const midi::Clip& clip, Micros now);

    /// Records a clip that closed while the previous one was still in flight.
    void log_dropped(const midi::Clip& clip, Micros now);

    /// Applies a control command and returns the resulting state. Throws
    /// ControlError for malformed commands.
    nlohmann::json control(const nlohmann::json& command, Micros now);

    /// Shows a held image once pacing allows it.
    void tick(Micros now);

    /// End of stream: shows a held image at its due time unless paused or
    /// waiting for a manual advance.
    void finish(Micros now);

    nlohmann::json state() const;
    llm::GenerationMode mode() const { return modes_.current(); }
    bool ended() const;
    std::size_t clip_count() const;

    nlohmann::json record() const;
    void save() const;

private:
    struct Pending {
        image::ImageEvent event;
        Micros eligible_from = 0;
    };

    image::PacingContext pacing_context_locked() const;
    void display_locked(Micros at);
    void append_locked(nlohmann::json entry);
    void publish(const std::string& type, const nlohmann::json& data) const;

    const std::string id_;
    const SessionConfig config_;
    const Backends backends_;
    const std::filesystem::path dir_;
    const Publisher publish_;
    const std::string created_at_;
    const visual::ClauseTable clauses_;
    image::ImageStore store_;
    llm::ModeController modes_;

    mutable std::mutex mutex_;
    image::StyleTag style_;
    image::Cadence cadence_;
    bool paused_ = false;
    bool advance_ = false;
    bool ended_ = false;
    visual::VisualParams visual_;
    double last_tempo_ = 96;
    std::optional<Micros> last_display_;
    std::optional<Pending> pending_;
    std::vector<nlohmann::json> log_;
    std::size_t clips_ = 0;
};

/// Record without ids, storage paths, wall-clock times and latencies: the part that must be
/// identical across runs.
nlohmann::json canonical_record(const nlohmann::json& record);
std::string canonical_digest(const nlohmann::json& record);

/// Rebuilds the clip a record entry was made from.
midi::Clip clip_from_entry(const nlohmann::json& entry);

/// Feeds the logged clips and controls of `record` through a fresh session,
/// in log order, and returns the new record.
nlohmann::json replay_record(const nlohmann::json& record, Backends backends, const std::filesystem::path& dir);

nlohmann::json load_record(const std::filesystem::path& path);

}  // namespace synesthete::session
