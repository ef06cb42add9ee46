#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace synesthete::session {

inline constexpr const char* kEventSchema = "synesthete.event/1";

/// Envelope: {"schema", "seq", "session", "type", "data"}. `seq` is
/// assigned by the hub and strictly increases.
struct StreamEvent {
    std::uint64_t seq = 0;
    std::string session;
    std::string type;
    nlohmann::json data;

    nlohmann::json to_json() const;
};

/// Fan-out point for server-push subscribers. Keeps the full history so a
/// reconnecting client can resume from the last sequence number it saw.
class EventHub {
public:
    std::uint64_t publish(const std::string& session, const std::string& type, nlohmann::json data);

    /// Events with seq > `after`, waiting up to `timeout` for at least one.
    std::vector<StreamEvent> wait_after(std::uint64_t after, std::chrono::milliseconds timeout) const;
    std::vector<StreamEvent> since(std::uint64_t after) const;
    std::uint64_t last_seq() const;

    /// Wakes every waiter; used at shutdown.
    void close();
    bool closed() const;

private:
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<StreamEvent> events_;
    bool closed_ = false;
};

}  // namespace synesthete::session
