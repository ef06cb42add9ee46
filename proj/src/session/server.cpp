#include "synesthete/session/server.hpp"

#include <fstream>
#include <regex>
#include <set>

#include <httplib.h>

#include "synesthete/midi/sources.hpp"

namespace synesthete::session {

using nlohmann::json;

namespace {

bool valid_id(const std::string& id)
{
    static const std::regex re("[A-Za-z0-9][A-Za-z0-9._-]{0,127}");
    return std::regex_match(id, re);
}

json parse_body(const std::string& body)
{
    if (body.empty()) return json::object();
    try {
        return json::parse(body);
    } catch (const json::exception& e) {
        throw ApiError(400, "bad_json", e.what());
    }
}

void check_fields(const json& j, std::initializer_list<const char*> allowed)
{
    if (!j.is_object()) throw ApiError(400, "bad_request", "body must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ApiError(400, "bad_request", "unknown field '" + k + "'");
    }
}

midi::RawMidiEvent event_from_json(const json& j)
{
    if (!j.is_object()) throw std::invalid_argument("event must be an object");
    for (const auto& [k, v] : j.items()) {
        if (k != "kind" && k != "pitch" && k != "velocity" && k != "timestamp_us" && k != "controller" && k != "value") {
            throw std::invalid_argument("unknown event field '" + k + "'");
        }
    }
    midi::RawMidiEvent e;
    e.kind = midi::event_kind_from_string(j.at("kind").get<std::string>());
    if (e.kind == midi::EventKind::control_change) {
        e.pitch = j.at("controller").get<int>();
        e.velocity = j.at("value").get<int>();
    } else {
        e.pitch = j.at("pitch").get<int>();
        e.velocity = j.value("velocity", e.kind == midi::EventKind::note_on ? 64 : 0);
    }
    e.timestamp = j.value("timestamp_us", Micros{0});
    midi::validate(e);
    return e;
}

}  // namespace

json ApiError::to_json() const
{
    return json{{"error", {{"code", code_}, {"message", what()}}}};
}

SessionService::SessionService(SessionConfig config, BackendFactory factory)
    : config_(std::move(config)), factory_(std::move(factory))
{
}

SessionService::~SessionService()
{
    stop_all();
    hub_.close();
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<SessionService::Entry> SessionService::active(const std::string& id) const
{
    if (!id.empty()) {
        auto e = find(id);
        if (!e) throw ApiError(404, "unknown_session", "no session '" + id + "'");
        if (e->session->ended()) throw ApiError(409, "session_ended", "session '" + id + "' has ended");
        return e;
    }
    std::lock_guard lock(mutex_);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        const auto& e = sessions_.at(*it);
        if (!e->session->ended()) return e;
    }
    throw ApiError(409, "no_active_session", "no session is running");
}

json SessionService::start_session(const json& request)
{
    check_fields(request, {"source", "path", "clock", "config"});
    const std::string source = request.value("source", "push");

    json cfg = config_to_json(config_);
    if (request.contains("config")) cfg.merge_patch(request.at("config"));
    SessionConfig config;
    try {
        config = config_from_json(cfg);
    } catch (const ConfigError& e) {
        throw ApiError(400, "bad_config", e.what());
    }

    auto entry = std::make_shared<Entry>();
    std::unique_ptr<midi::MidiSource> src;
    RunnerOptions opts;
    try {
        if (source == "file") {
            src = std::make_unique<midi::FileReplaySource>(request.at("path").get<std::string>());
            opts.synchronous = true;
        } else if (source == "device") {
            src = std::make_unique<midi::DeviceSource>(request.at("path").get<std::string>());
            opts.wall_clock = true;
        } else if (source == "push") {
            const std::string clock = request.value("clock", "client");
            if (clock != "client" && clock != "server") throw ApiError(400, "bad_request", "clock must be client or server");
            opts.wall_clock = clock == "server";
            entry->push_source = true;
        } else {
            throw ApiError(400, "bad_request", "unknown source '" + source + "'");
        }
    } catch (const ApiError&) {
        throw;
    } catch (const std::exception& e) {
        throw ApiError(400, "bad_source", e.what());
    }

    Backends backends;
    try {
        backends = factory_(config);
    } catch (const std::exception& e) {
        throw ApiError(400, "bad_config", e.what());
    }
    const std::string id = make_session_id();
    auto session = std::make_shared<Session>(
        id, config, std::move(backends), std::filesystem::path(config.data_dir) / id,
        [this](const std::string& sid, const std::string& type, const json& data) { hub_.publish(sid, type, data); });
    session->save();
    entry->session = session;
    entry->runner = std::make_unique<SessionRunner>(session, std::move(src), opts);
    {
        std::lock_guard lock(mutex_);
        sessions_[id] = entry;
        order_.push_back(id);
    }
    entry->runner->start();
    return session->state();
}

json SessionService::stop_session(const std::string& id)
{
    auto e = find(id);
    if (!e) throw ApiError(404, "unknown_session", "no session '" + id + "'");
    e->runner->stop();
    return e->session->state();
}

json SessionService::list_sessions() const
{
    json out = json::array();
    std::set<std::string> seen;
    {
        std::lock_guard lock(mutex_);
        for (const auto& id : order_) {
            const auto& e = sessions_.at(id);
            out.push_back({{"id", id}, {"active", !e->session->ended()}, {"clips", e->session->clip_count()}});
            seen.insert(id);
        }
    }
    std::error_code ec;
    for (const auto& d : std::filesystem::directory_iterator(config_.data_dir, ec)) {
        const std::string id = d.path().filename().string();
        if (seen.count(id) || !std::filesystem::exists(d.path() / "record.json")) continue;
        out.push_back({{"id", id}, {"active", false}, {"clips", nullptr}});
    }
    return json{{"sessions", out}};
}

json SessionService::session_record(const std::string& id, bool canonical) const
{
    if (!valid_id(id)) throw ApiError(400, "bad_request", "malformed session id");
    json record;
    if (auto e = find(id)) {
        record = e->session->record();
    } else {
        const auto path = std::filesystem::path(config_.data_dir) / id / "record.json";
        if (!std::filesystem::exists(path)) throw ApiError(404, "unknown_session", "no session '" + id + "'");
        record = load_record(path);
    }
    return canonical ? canonical_record(record) : record;
}

json SessionService::control(const json& command)
{
    if (!command.is_object()) throw ApiError(400, "bad_command", "command must be a JSON object");
    const std::string id = command.contains("session") && command.at("session").is_string()
                               ? command.at("session").get<std::string>()
                               : std::string();
    auto e = active(id);
    try {
        return e->session->control(command, e->runner->now());
    } catch (const ControlError& err) {
        throw ApiError(400, "bad_command", err.what());
    }
}

json SessionService::state(const std::string& id) const
{
    return active(id)->session->state();
}

json SessionService::push_midi(const json& body)
{
    check_fields(body, {"events", "flush", "session"});
    auto e = active(body.value("session", ""));
    if (!e->push_source) throw ApiError(409, "not_push_session", "session does not take pushed events");
    std::vector<midi::RawMidiEvent> events;
    if (body.contains("events")) {
        const auto& arr = body.at("events");
        if (!arr.is_array()) throw ApiError(400, "bad_event", "events must be an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            try {
                events.push_back(event_from_json(arr[i]));
            } catch (const std::exception& err) {
                throw ApiError(400, "bad_event", "event " + std::to_string(i) + ": " + err.what());
            }
        }
    }
    for (const auto& ev : events) e->runner->feed(ev);
    if (body.value("flush", false)) e->runner->flush();
    return json{{"accepted", events.size()}, {"now_us", e->runner->now()}};
}

json SessionService::clock(const std::string& id) const
{
    auto e = active(id);
    return json{{"session", e->session->id()}, {"now_us", e->runner->now()}};
}

std::optional<image::Bytes> SessionService::image(const std::string& digest) const
{
    {
        std::lock_guard lock(mutex_);
        for (const auto& [id, e] : sessions_) {
            if (auto b = e->session->store().get(digest)) return b;
        }
    }
    std::error_code ec;
    for (const auto& d : std::filesystem::directory_iterator(config_.data_dir, ec)) {
        image::ImageStore store(d.path() / "images");
        if (auto b = store.get(digest)) return b;
    }
    return std::nullopt;
}

void SessionService::wait(const std::string& id)
{
    auto e = find(id);
    if (!e) throw ApiError(404, "unknown_session", "no session '" + id + "'");
    e->runner->wait();
}

void SessionService::stop_all()
{
    std::vector<std::shared_ptr<Entry>> all;
    {
        std::lock_guard lock(mutex_);
        for (const auto& [id, e] : sessions_) all.push_back(e);
    }
    for (auto& e : all) e->runner->stop();
}

HttpServer::HttpServer(SessionService& service) : service_(service), server_(std::make_unique<httplib::Server>())
{
    auto& srv = *server_;
    const auto send_json = [](httplib::Response& res, const json& body, int status = 200) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    const auto guarded = [send_json](auto fn) {
        return [fn, send_json](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const ApiError& e) {
                send_json(res, e.to_json(), e.status());
            } catch (const std::exception& e) {
                send_json(res, ApiError(500, "internal", e.what()).to_json(), 500);
            }
        };
    };

    srv.Get("/api/v1/health", guarded([send_json](const httplib::Request&, httplib::Response& res) {
                send_json(res, json{{"ok", true}, {"schema", kEventSchema}});
            }));

    srv.Get("/api/v1/events", [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t since = 0;
        try {
            if (req.has_param("since")) since = std::stoull(req.get_param_value("since"));
            else if (req.has_header("Last-Event-ID")) since = std::stoull(req.get_header_value("Last-Event-ID"));
        } catch (const std::exception&) {
            res.status = 400;
            res.set_content(ApiError(400, "bad_request", "since must be a sequence number").to_json().dump(),
                            "application/json");
            return;
        }
        const std::string filter = req.has_param("session") ? req.get_param_value("session") : "";
        res.set_header("Cache-Control", "no-cache");
        res.set_header("X-Accel-Buffering", "no");
        auto cursor = std::make_shared<std::uint64_t>(since);
        auto idle = std::make_shared<int>(0);
        res.set_chunked_content_provider("text/event-stream",
                                         [this, cursor, idle, filter](std::size_t, httplib::DataSink& sink) {
                                             auto& hub = service_.hub();
                                             const auto events = hub.wait_after(*cursor, std::chrono::milliseconds(500));
                                             for (const auto& e : events) {
                                                 *cursor = e.seq;
                                                 if (!filter.empty() && e.session != filter) continue;
                                                 const std::string msg = "id: " + std::to_string(e.seq) +
                                                                         "\nevent: " + e.type +
                                                                         "\ndata: " + e.to_json().dump() + "\n\n";
                                                 if (!sink.write(msg.data(), msg.size())) return false;
                                             }
                                             if (events.empty()) {
                                                 if (hub.closed()) {
                                                     sink.done();
                                                     return true;
                                                 }
                                                 if (++*idle % 30 == 0) {
                                                     static const std::string ping = ": keep-alive\n\n";
                                                     if (!sink.write(ping.data(), ping.size())) return false;
                                                 }
                                             }
                                             return sink.is_writable();
                                         });
    });

    srv.Post("/api/v1/control", guarded([this, send_json](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, json{{"ok", true}, {"state", service_.control(parse_body(req.body))}});
             }));

    srv.Get("/api/v1/state", guarded([this, send_json](const httplib::Request& req, httplib::Response& res) {
                send_json(res, service_.state(req.has_param("session") ? req.get_param_value("session") : ""));
            }));

    srv.Get("/api/v1/sessions", guarded([this, send_json](const httplib::Request&, httplib::Response& res) {
                send_json(res, service_.list_sessions());
            }));

    srv.Post("/api/v1/sessions", guarded([this, send_json](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, service_.start_session(parse_body(req.body)), 201);
             }));

    srv.Get(R"(/api/v1/sessions/([^/]+))", guarded([this, send_json](const httplib::Request& req, httplib::Response& res) {
                const bool canonical = req.has_param("canonical") && req.get_param_value("canonical") != "0";
                send_json(res, service_.session_record(req.matches[1], canonical));
            }));

    srv.Delete(R"(/api/v1/sessions/([^/]+))", guarded([this, send_json](const httplib::Request& req, httplib::Response& res) {
                   send_json(res, service_.stop_session(req.matches[1]));
               }));

    srv.Post("/api/v1/midi", guarded([this, send_json](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, service_.push_midi(parse_body(req.body)));
             }));

    srv.Get("/api/v1/clock", guarded([this, send_json](const httplib::Request& req, httplib::Response& res) {
                send_json(res, service_.clock(req.has_param("session") ? req.get_param_value("session") : ""));
            }));

    srv.Get(R"(/images/([0-9a-f]{64})\.png)", guarded([this, send_json](const httplib::Request& req, httplib::Response& res) {
                const auto bytes = service_.image(req.matches[1]);
                if (!bytes) throw ApiError(404, "unknown_image", "no such image");
                res.set_header("Cache-Control", "public, max-age=31536000, immutable");
                res.set_content(std::string(bytes->begin(), bytes->end()), "image/png");
            }));
}

HttpServer::~HttpServer()
{
    stop();
}

int HttpServer::bind(const std::string& host, int port)
{
    // SO_REUSEADDR only: a second server on a busy port must fail, not share it.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen()
{
    server_->listen_after_bind();
}

void HttpServer::start()
{
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void HttpServer::stop()
{
    service_.hub().close();
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace synesthete::session
