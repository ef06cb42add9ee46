#include "synesthete/session/session.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "synesthete/abc/codec.hpp"
#include "synesthete/image/image.hpp"
#include "synesthete/llm/http_backend.hpp"

namespace synesthete::session {

using nlohmann::json;

namespace {

std::string utc_now()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

visual::ClauseTable clause_table(const SessionConfig& config)
{
    if (config.clause_table.empty()) return visual::ClauseTable::defaults();
    return visual::ClauseTable::load(config.clause_table);
}

std::chrono::milliseconds seconds_to_ms(double s)
{
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(s * 1000)));
}

// Description first, then the mapping clauses, comma separated.
std::string image_prompt(std::string description, const std::vector<std::string>& clauses)
{
    while (!description.empty() && (std::isspace(static_cast<unsigned char>(description.back())) || description.back() == '.')) {
        description.pop_back();
    }
    for (const auto& c : clauses) description += ", " + c;
    return description;
}

json notes_json(const midi::Clip& clip)
{
    json notes = json::array();
    for (const auto& n : clip.notes) notes.push_back({n.pitch, n.velocity, n.onset, n.duration});
    return notes;
}

json clip_header(const midi::Clip& clip, Micros now)
{
    return json{
        {"type", "clip"},
        {"clip_index", clip.clip_index},
        {"window", {{"start_us", clip.window_start}, {"end_us", clip.window_end}}},
        {"closed_at_us", now},
        {"notes", notes_json(clip)},
    };
}

double elapsed_ms(std::chrono::steady_clock::time_point since)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

void check_command_keys(const json& cmd, std::initializer_list<const char*> extra)
{
    std::set<std::string> allowed = {"command", "session"};
    for (const char* k : extra) allowed.insert(k);
    for (const auto& [k, v] : cmd.items()) {
        if (!allowed.count(k)) throw ControlError("unknown field '" + k + "' for command " + cmd.at("command").dump());
    }
    for (const char* k : extra) {
        if (!cmd.contains(k)) throw ControlError(std::string("missing field '") + k + "'");
    }
}

}  // namespace

Backends make_backends(const SessionConfig& config)
{
    Backends b;
    try {
        if (config.llm.backend == "mock") {
            b.llm = std::make_shared<llm::MockBackend>();
        } else if (config.llm.backend == "fixture") {
            b.llm = std::make_shared<llm::FixtureBackend>(llm::FixtureBackend::load(config.llm.fixture));
        } else {
            llm::HttpBackendConfig h;
            h.base_url = config.llm.url;
            h.path = config.llm.path;
            h.timeout = seconds_to_ms(config.llm.timeout_s);
            b.llm = std::make_shared<llm::HttpBackend>(h);
        }
    } catch (const llm::LlmError& e) {
        throw ConfigError(e.what());
    }
    if (config.llm.mock_fallback) b.fallback = std::make_shared<llm::MockBackend>();
    if (config.image.backend == "mock") {
        b.image = std::make_shared<image::MockImageBackend>();
    } else {
        image::HttpImageConfig h;
        h.base_url = config.image.url;
        h.path = config.image.path;
        h.steps = config.image.steps;
        h.timeout = seconds_to_ms(config.image.timeout_s);
        b.image = std::make_shared<image::HttpImageBackend>(h);
    }
    return b;
}

std::string make_session_id()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    std::random_device rd;
    os << std::put_time(&tm, "%Y%m%d-%H%M%S") << '-' << std::hex << std::setw(6) << std::setfill('0')
       << (rd() & 0xFFFFFF);
    return os.str();
}

Session::Session(std::string id, SessionConfig config, Backends backends, std::filesystem::path dir, Publisher publisher)
    : id_(std::move(id)),
      config_(std::move(config)),
      backends_(std::move(backends)),
      dir_(std::move(dir)),
      publish_(std::move(publisher)),
      created_at_(utc_now()),
      clauses_(clause_table(config_)),
      store_(dir_ / "images"),
      modes_(config_.divergent_temperature, config_.convergent_temperature),
      style_(config_.image.style),
      cadence_(config_.cadence)
{
    if (!backends_.llm || !backends_.image) throw ConfigError("session needs an LLM and an image backend");
    modes_.set(config_.initial_mode);
    publish("session_start", json{{"config", config_to_json(config_)}, {"state", state()}});
}

void Session::publish(const std::string& type, const json& data) const
{
    if (publish_) publish_(id_, type, data);
}

image::PacingContext Session::pacing_context_locked() const
{
    image::PacingContext ctx;
    ctx.tempo_bpm = last_tempo_;
    ctx.beats_per_bar = boost::rational_cast<double>(config_.meter.beats());
    ctx.advance = advance_;
    return ctx;
}

void Session::append_locked(json entry)
{
    log_.push_back(std::move(entry));
}

void Session::display_locked(Micros at)
{
    auto& ev = pending_->event;
    ev.displayed_at = at;
    last_display_ = at;
    advance_ = false;
    const json d = {{"type", "display"}, {"clip_index", ev.clip_index}, {"image_ref", ev.image_ref}, {"displayed_at_us", at}};
    append_locked(d);
    publish("display", d);
    pending_.reset();
}

json Session::process_clip(const midi::Clip& clip, Micros now)
{
    const auto started = std::chrono::steady_clock::now();
    llm::GenerationMode mode;
    image::StyleTag style;
    visual::VisualParams prev;
    {
        std::lock_guard lock(mutex_);
        if (ended_) throw std::logic_error("session has ended");
        mode = modes_.current();
        style = style_;
        prev = visual_;
    }

    json entry = clip_header(clip, now);
    analysis::AnalysisConfig acfg;
    acfg.meter = config_.meter;
    const analysis::Analysis a = analysis::analyze(clip, acfg);
    entry["features"] = a.features;
    entry["emotion"] = a.emotion;
    entry["mode"] = {{"kind", llm::to_string(mode.kind)}, {"temperature", mode.temperature}};

    const auto fail = [&](const std::string& status, const std::string& error) {
        entry["status"] = status;
        entry["error"] = error;
        entry["pipeline_latency_ms"] = elapsed_ms(started);
        std::lock_guard lock(mutex_);
        last_tempo_ = a.features.tempo_bpm;
        ++clips_;
        append_locked(entry);
        publish("telemetry", entry);
        return entry;
    };

    std::string abc_text;
    try {
        const int bpm = static_cast<int>(std::lround(a.features.tempo_bpm));
        abc_text = abc::encode_clip(clip, bpm, config_.meter, a.features.key).text;
    } catch (const std::exception& e) {
        return fail("encode_failed", e.what());
    }
    entry["abc"] = abc_text;

    visual::MappingConfig mcfg;
    mcfg.smoothing = config_.smoothing;
    mcfg.minor_delta = config_.minor_delta;
    const visual::VisualParams params = visual::map_features(a.features, a.emotion, prev, mcfg);
    const std::vector<std::string> clauses = clauses_.clauses(params);
    entry["visual"] = params;
    entry["clauses"] = clauses;

    llm::ImageryOptions opts;
    opts.model = config_.llm.model;
    opts.timeout = seconds_to_ms(config_.llm.timeout_s);
    opts.fallback = backends_.fallback;
    opts.clip_index = clip.clip_index;
    opts.seed = config_.llm.seed;
    llm::ImageryOutcome imagery;
    try {
        imagery = llm::describe_imagery(abc_text, mode, backends_.llm, opts);
    } catch (const std::exception& e) {
        {
            std::lock_guard lock(mutex_);
            visual_ = params;
        }
        return fail("llm_failed", e.what());
    }
    entry["completion"] = {
        {"request",
         {{"model", imagery.request.model},
          {"prompt", imagery.request.prompt},
          {"temperature", imagery.request.temperature},
          {"max_tokens", imagery.request.max_tokens},
          {"seed", imagery.request.seed}}},
        {"text", imagery.result.text},
        {"description", imagery.description},
        {"backend", imagery.result.backend_id},
        {"latency_ms", imagery.result.latency_ms},
        {"fallback", imagery.fallback},
        {"error", imagery.fallback ? json(imagery.error) : json(nullptr)},
    };

    image::ImageRequest req;
    req.prompt = image_prompt(imagery.description, clauses);
    req.style = style;
    req.seed = config_.image.seed + static_cast<std::uint64_t>(clip.clip_index);
    req.size = config_.image.size;
    req.visual_params = params;
    image::ImageEvent ev;
    try {
        ev = image::generate(req, *backends_.image, store_, clip.clip_index);
    } catch (const std::exception& e) {
        {
            std::lock_guard lock(mutex_);
            visual_ = params;
        }
        return fail("image_failed", e.what());
    }
    ev.requested_at = now;
    entry["image_request"] = {{"style", image::to_string(style)}, {"seed", req.seed},
                              {"width", req.size.width}, {"height", req.size.height}};

    std::lock_guard lock(mutex_);
    visual_ = params;
    last_tempo_ = a.features.tempo_bpm;
    ++clips_;
    if (pending_) {
        // A newer image supersedes one still waiting for its slot.
        const json s = {{"type", "suppressed"}, {"clip_index", pending_->event.clip_index},
                        {"image_ref", pending_->event.image_ref}, {"by_clip_index", clip.clip_index}};
        append_locked(s);
        publish("suppressed", s);
        pending_.reset();
    }
    const bool show = image::pacing_decide(now, last_display_, cadence_, paused_, pacing_context_locked()) ==
                      image::Decision::display;
    if (show) {
        ev.displayed_at = now;
        last_display_ = now;
        advance_ = false;
    } else {
        pending_ = Pending{ev, now};
    }
    entry["status"] = "generated";
    entry["image"] = ev;
    entry["pipeline_latency_ms"] = elapsed_ms(started);
    append_locked(entry);

    json telemetry = {
        {"clip_index", clip.clip_index},
        {"key", tonic_name(a.features.key) + " " + mode_name(a.features.key.mode)},
        {"tempo_bpm", a.features.tempo_bpm},
        {"contour", analysis::to_string(a.features.contour)},
        {"emotion", a.emotion},
        {"mode", entry["mode"]},
        {"description", imagery.description},
        {"fallback", imagery.fallback},
        {"visual", params},
        {"clauses", clauses},
        {"image_prompt", ev.prompt},
    };
    publish("telemetry", telemetry);
    publish("image", json(ev));
    return entry;
}

void Session::log_dropped(const midi::Clip& clip, Micros now)
{
    json entry = clip_header(clip, now);
    entry["status"] = "dropped";
    std::lock_guard lock(mutex_);
    ++clips_;
    append_locked(entry);
    publish("dropped", json{{"clip_index", clip.clip_index}});
}

json Session::control(const json& command, Micros now)
{
    if (!command.is_object() || !command.contains("command") || !command.at("command").is_string()) {
        throw ControlError("control body must be an object with a \"command\" string");
    }
    const std::string name = command.at("command").get<std::string>();
    std::unique_lock lock(mutex_);
    if (ended_) throw ControlError("session has ended");
    try {
        if (name == "set_mode") {
            check_command_keys(command, {"mode"});
            modes_.set(llm::mode_kind_from_string(command.at("mode").get<std::string>()));
        } else if (name == "pause") {
            check_command_keys(command, {});
            paused_ = true;
        } else if (name == "resume") {
            check_command_keys(command, {});
            paused_ = false;
            if (pending_) pending_->eligible_from = std::max(pending_->eligible_from, now);
        } else if (name == "advance") {
            check_command_keys(command, {});
            advance_ = true;
        } else if (name == "set_style") {
            check_command_keys(command, {"style"});
            style_ = image::style_from_string(command.at("style").get<std::string>());
        } else if (name == "set_cadence") {
            check_command_keys(command, {"cadence"});
            cadence_ = command.at("cadence").get<image::Cadence>();
        } else {
            throw ControlError("unknown command '" + name + "'");
        }
    } catch (const ControlError&) {
        throw;
    } catch (const std::exception& e) {
        throw ControlError(e.what());
    }

    json logged = command;
    logged.erase("session");
    const json entry = {{"type", "control"}, {"at_us", now}, {"command", logged}};
    append_locked(entry);

    // Advance shows a held image straight away, even when paused.
    if (advance_ && pending_) {
        display_locked(now);
    } else if (pending_ && !paused_) {
        const auto due = image::next_display_time(pending_->eligible_from, last_display_, cadence_,
                                                  pacing_context_locked());
        if (due && *due <= now) display_locked(*due);
    }
    lock.unlock();
    json st = state();
    publish("control", json{{"command", logged}, {"at_us", now}, {"state", st}});
    return st;
}

void Session::tick(Micros now)
{
    std::lock_guard lock(mutex_);
    if (!pending_ || paused_) return;
    const auto due =
        image::next_display_time(pending_->eligible_from, last_display_, cadence_, pacing_context_locked());
    if (due && *due <= now) display_locked(*due);
}

void Session::finish(Micros now)
{
    std::unique_lock lock(mutex_);
    if (ended_) return;
    if (pending_ && !paused_) {
        const auto due =
            image::next_display_time(pending_->eligible_from, last_display_, cadence_, pacing_context_locked());
        if (due) display_locked(std::max(*due, now));
    }
    append_locked(json{{"type", "end"}, {"at_us", now}});
    ended_ = true;
    const std::size_t clips = clips_;
    lock.unlock();
    publish("session_end", json{{"clips", clips}});
}

json Session::state() const
{
    const auto m = modes_.current();
    std::lock_guard lock(mutex_);
    return json{
        {"session", id_},
        {"mode", {{"kind", llm::to_string(m.kind)}, {"temperature", m.temperature}}},
        {"paused", paused_},
        {"style", image::to_string(style_)},
        {"cadence", cadence_},
        {"pending_clip", pending_ ? json(pending_->event.clip_index) : json(nullptr)},
        {"ended", ended_},
        {"clips", clips_},
    };
}

bool Session::ended() const
{
    std::lock_guard lock(mutex_);
    return ended_;
}

std::size_t Session::clip_count() const
{
    std::lock_guard lock(mutex_);
    return clips_;
}

json Session::record() const
{
    std::lock_guard lock(mutex_);
    return json{
        {"schema", kRecordSchema},
        {"id", id_},
        {"created_at", created_at_},
        {"config", config_to_json(config_)},
        {"log", log_},
    };
}

void Session::save() const
{
    std::filesystem::create_directories(dir_);
    const auto tmp = dir_ / "record.json.tmp";
    {
        std::ofstream out(tmp);
        out << record().dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, dir_ / "record.json");
}

json canonical_record(const json& record)
{
    static const std::set<std::string> volatile_keys = {"id", "created_at", "data_dir", "latency_ms", "gen_latency_ms",
                                                        "pipeline_latency_ms"};
    std::function<json(const json&)> strip = [&](const json& j) -> json {
        if (j.is_object()) {
            json out = json::object();
            for (const auto& [k, v] : j.items()) {
                if (!volatile_keys.count(k)) out[k] = strip(v);
            }
            return out;
        }
        if (j.is_array()) {
            json out = json::array();
            for (const auto& v : j) out.push_back(strip(v));
            return out;
        }
        return j;
    };
    return strip(record);
}

std::string canonical_digest(const json& record)
{
    const std::string s = canonical_record(record).dump();
    return image::sha256_hex(s.data(), s.size());
}

midi::Clip clip_from_entry(const json& entry)
{
    midi::Clip clip;
    clip.clip_index = entry.at("clip_index").get<int>();
    clip.window_start = entry.at("window").at("start_us").get<Micros>();
    clip.window_end = entry.at("window").at("end_us").get<Micros>();
    for (const auto& n : entry.at("notes")) {
        midi::NoteEvent e;
        e.pitch = n.at(0).get<int>();
        e.velocity = n.at(1).get<int>();
        e.onset = n.at(2).get<Micros>();
        e.duration = n.at(3).get<Micros>();
        clip.notes.push_back(e);
    }
    return clip;
}

json replay_record(const json& record, Backends backends, const std::filesystem::path& dir)
{
    SessionConfig config = config_from_json(record.at("config"));
    Session session(record.value("id", make_session_id()), config, std::move(backends), dir);
    Micros last = 0;
    for (const auto& entry : record.at("log")) {
        const std::string type = entry.at("type").get<std::string>();
        if (type == "clip") {
            const midi::Clip clip = clip_from_entry(entry);
            const Micros now = entry.at("closed_at_us").get<Micros>();
            session.tick(now);
            if (entry.value("status", "") == "dropped") {
                session.log_dropped(clip, now);
            } else {
                session.process_clip(clip, now);
            }
            last = now;
        } else if (type == "control") {
            const Micros at = entry.at("at_us").get<Micros>();
            session.tick(at);
            session.control(entry.at("command"), at);
            last = at;
        } else if (type == "end") {
            last = entry.at("at_us").get<Micros>();
            break;
        }
    }
    session.finish(last);
    return session.record();
}

json load_record(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return json::parse(in);
}

}  // namespace synesthete::session
