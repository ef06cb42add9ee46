#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "synesthete/session/config.hpp"
#include "synesthete/session/events.hpp"
#include "synesthete/session/runner.hpp"
#include "synesthete/session/session.hpp"

namespace httplib {
class Server;
}

namespace synesthete::session {

/// Error carried to HTTP clients as {"error": {"code", "message"}}.
class ApiError : public std::runtime_error {
public:
    ApiError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code))
    {
    }
    int status() const { return status_; }
    const std::string& code() const { return code_; }
    nlohmann::json to_json() const;

private:
    int status_;
    std::string code_;
};

using BackendFactory = std::function<Backends(const SessionConfig&)>;

/// Session manager behind the HTTP API. The methods mirror the endpoints so
/// they can be driven without a socket.
class SessionService {
public:
    explicit SessionService(SessionConfig config, BackendFactory factory = make_backends);
    ~SessionService();

    EventHub& hub() { return hub_; }
    const SessionConfig& config() const { return config_; }

    /// Body: {"source": "push" | "file" | "device", "path", "clock": "client" | "server",
    ///        "config": {partial config}}. Returns the new session's state.
    nlohmann::json start_session(const nlohmann::json& request);
    nlohmann::json stop_session(const std::string& id);
    nlohmann::json list_sessions() const;
    nlohmann::json session_record(const std::string& id, bool canonical) const;

    /// Applies to the session named in the command, else the most recent
    /// active one. No active session: ApiError 409 "no_active_session".
    nlohmann::json control(const nlohmann::json& command);
    nlohmann::json state(const std::string& id = {}) const;

    /// {"events": [{"kind", "pitch", "velocity", "timestamp_us"}], "flush": bool, "session"}.
    nlohmann::json push_midi(const nlohmann::json& body);
    nlohmann::json clock(const std::string& id = {}) const;

    /// PNG bytes for a digest from any known session, if present.
    std::optional<image::Bytes> image(const std::string& digest) const;

    /// Waits until the session's input is exhausted and it has finished.
    void wait(const std::string& id);
    void stop_all();

private:
    struct Entry {
        std::shared_ptr<Session> session;
        std::unique_ptr<SessionRunner> runner;
        PushSource* push = nullptr;  // owned by the runner when the source is a push source
        bool push_source = false;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    std::shared_ptr<Entry> active(const std::string& id) const;

    const SessionConfig config_;
    const BackendFactory factory_;
    EventHub hub_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::vector<std::string> order_;
};

/// HTTP front end. Routes:
///   GET  /api/v1/events[?since=N&session=ID]   server-sent events
///   POST /api/v1/control                        control command
///   GET  /api/v1/state                          active session state
///   GET  /api/v1/sessions, POST /api/v1/sessions
///   GET  /api/v1/sessions/{id}[?canonical=1], DELETE /api/v1/sessions/{id}
///   POST /api/v1/midi                           push events into a push session
///   GET  /api/v1/clock
///   GET  /images/{digest}.png
class HttpServer {
public:
    explicit HttpServer(SessionService& service);
    ~HttpServer();

    /// Binds and returns the port (0 picks a free one). Throws
    /// std::runtime_error when the address cannot be bound.
    int bind(const std::string& host, int port);
    void listen();  // blocks until stop()
    void start();   // listen() on a background thread
    void stop();

private:
    SessionService& service_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace synesthete::session
