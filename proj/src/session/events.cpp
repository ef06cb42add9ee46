#include "synesthete/session/events.hpp"

#include <algorithm>

namespace synesthete::session {

nlohmann::json StreamEvent::to_json() const
{
    return nlohmann::json{{"schema", kEventSchema}, {"seq", seq}, {"session", session}, {"type", type}, {"data", data}};
}

std::uint64_t EventHub::publish(const std::string& session, const std::string& type, nlohmann::json data)
{
    std::uint64_t seq = 0;
    {
        std::lock_guard lock(mutex_);
        seq = events_.size() + 1;
        events_.push_back(StreamEvent{seq, session, type, std::move(data)});
    }
    cv_.notify_all();
    return seq;
}

std::vector<StreamEvent> EventHub::since(std::uint64_t after) const
{
    std::lock_guard lock(mutex_);
    if (after >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(after), events_.end()};
}

std::vector<StreamEvent> EventHub::wait_after(std::uint64_t after, std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || events_.size() > after; });
    if (after >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(after), events_.end()};
}

std::uint64_t EventHub::last_seq() const
{
    std::lock_guard lock(mutex_);
    return events_.size();
}

void EventHub::close()
{
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool EventHub::closed() const
{
    std::lock_guard lock(mutex_);
    return closed_;
}

}  // namespace synesthete::session
