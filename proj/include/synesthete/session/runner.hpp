#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "synesthete/midi/ingest_buffer.hpp"
#include "synesthete/midi/sources.hpp"
#include "synesthete/session/session.hpp"

namespace synesthete::session {

/// Events handed in by another thread (the HTTP API). With `server_clock`
/// the timestamps are replaced by arrival time.
class PushSource : public midi::MidiSource {
public:
    explicit PushSource(bool server_clock = false);

    void push(midi::RawMidiEvent event);
    void close();

    std::optional<midi::RawMidiEvent> next() override;
    bool realtime() const override { return server_clock_; }
    void stop() override { close(); }

private:
    const bool server_clock_;
    const std::chrono::steady_clock::time_point started_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<midi::RawMidiEvent> queue_;
    bool closed_ = false;
};

/// Runs a whole non-realtime source through `session` on the calling
/// thread. Windows close on event time, nothing is dropped, and the session
/// is finished and saved at the end. Returns the number of clips.
std::size_t run_replay(Session& session, midi::MidiSource& source, bool save = true);

struct RunnerOptions {
    /// Process each clip on the feeding thread, in order, never dropping.
    /// Otherwise a single worker takes one clip at a time and clips closing
    /// while it is busy are logged as dropped.
    bool synchronous = false;
    /// Windows close on the wall clock (a ticker thread) instead of on event
    /// timestamps.
    bool wall_clock = false;
    std::chrono::milliseconds tick{20};
};

/// Live driver for one session. Reads from `source` on its own thread when
/// one is given; otherwise events arrive through feed().
class SessionRunner {
public:
    SessionRunner(std::shared_ptr<Session> session, std::unique_ptr<midi::MidiSource> source, RunnerOptions options);
    ~SessionRunner();
    SessionRunner(const SessionRunner&) = delete;
    SessionRunner& operator=(const SessionRunner&) = delete;

    void start();

    /// Thread-safe entry for pushed events. Throws midi::MidiError for
    /// invalid data.
    void feed(const midi::RawMidiEvent& event);

    /// Closes the window in progress now (client-clock sessions).
    void flush();

    /// Stops input, lets an in-flight clip finish, then finishes and saves
    /// the session. Idempotent.
    void stop();

    /// Blocks until the source is exhausted and the session finished.
    void wait();

    bool finished() const { return finished_; }
    Micros now() const;
    const std::shared_ptr<Session>& session() const { return session_; }

private:
    void dispatch(const midi::Clip& clip, Micros now);
    void reader_loop();
    void ticker_loop();
    void worker_loop();
    void drain_worker();

    std::shared_ptr<Session> session_;
    std::unique_ptr<midi::MidiSource> source_;
    const RunnerOptions options_;
    const std::chrono::steady_clock::time_point started_;
    midi::IngestBuffer ingest_;
    std::mutex feed_mutex_;

    std::mutex worker_mutex_;
    std::condition_variable worker_cv_;
    std::optional<std::pair<midi::Clip, Micros>> slot_;
    bool busy_ = false;
    bool worker_stop_ = false;

    std::atomic<bool> stopping_{false};
    std::atomic<bool> finished_{false};
    std::mutex stop_mutex_;
    std::condition_variable finished_cv_;
    std::thread reader_;
    std::thread ticker_;
    std::thread worker_;
};

}  // namespace synesthete::session
