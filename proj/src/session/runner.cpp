#include "synesthete/session/runner.hpp"

namespace synesthete::session {

namespace {

Micros window_us(const SessionConfig& config)
{
    return static_cast<Micros>(std::llround(config.window_length_s * 1e6));
}

}  // namespace

PushSource::PushSource(bool server_clock) : server_clock_(server_clock), started_(std::chrono::steady_clock::now()) {}

void PushSource::push(midi::RawMidiEvent event)
{
    if (server_clock_) {
        event.timestamp =
            std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - started_).count();
    }
    {
        std::lock_guard lock(mutex_);
        if (closed_) return;
        queue_.push_back(event);
    }
    cv_.notify_one();
}

void PushSource::close()
{
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

std::optional<midi::RawMidiEvent> PushSource::next()
{
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
    if (queue_.empty()) return std::nullopt;
    auto e = queue_.front();
    queue_.pop_front();
    return e;
}

std::size_t run_replay(Session& session, midi::MidiSource& source, bool save)
{
    midi::IngestBuffer ingest(window_us(session.config()));
    std::size_t clips = 0;
    const auto run = [&](const midi::Clip& clip) {
        session.tick(clip.window_end);
        session.process_clip(clip, clip.window_end);
        if (save) session.save();
        ++clips;
    };
    while (auto e = source.next()) {
        for (const auto& clip : ingest.close_due_windows(e->timestamp)) run(clip);
        try {
            ingest.push_event(*e);
        } catch (const midi::MidiError&) {
            // counted in the ingest stats; the stream goes on
        }
    }
    if (auto clip = ingest.flush()) run(*clip);
    session.finish(ingest.window_start());
    if (save) session.save();
    return clips;
}

SessionRunner::SessionRunner(std::shared_ptr<Session> session, std::unique_ptr<midi::MidiSource> source,
                             RunnerOptions options)
    : session_(std::move(session)),
      source_(std::move(source)),
      options_(options),
      started_(std::chrono::steady_clock::now()),
      ingest_(window_us(session_->config()))
{
}

SessionRunner::~SessionRunner()
{
    stop();
    if (reader_.joinable()) reader_.join();
}

void SessionRunner::start()
{
    if (!options_.synchronous) worker_ = std::thread([this] { worker_loop(); });
    if (options_.wall_clock) ticker_ = std::thread([this] { ticker_loop(); });
    if (source_) reader_ = std::thread([this] { reader_loop(); });
}

Micros SessionRunner::now() const
{
    if (options_.wall_clock) {
        return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - started_)
            .count();
    }
    return ingest_.clock();
}

void SessionRunner::feed(const midi::RawMidiEvent& event)
{
    std::lock_guard lock(feed_mutex_);
    if (stopping_) return;
    if (!options_.wall_clock) {
        for (const auto& clip : ingest_.close_due_windows(event.timestamp)) dispatch(clip, clip.window_end);
    }
    ingest_.push_event(event);
}

void SessionRunner::flush()
{
    std::lock_guard lock(feed_mutex_);
    if (stopping_) return;
    const Micros end = ingest_.window_end();
    if (auto clip = ingest_.flush()) dispatch(*clip, end);
}

void SessionRunner::dispatch(const midi::Clip& clip, Micros now)
{
    if (options_.synchronous) {
        session_->tick(now);
        session_->process_clip(clip, now);
        session_->save();
        return;
    }
    {
        std::lock_guard lock(worker_mutex_);
        if (!busy_ && !slot_) {
            slot_.emplace(clip, now);
            worker_cv_.notify_all();
            return;
        }
    }
    session_->log_dropped(clip, now);
}

void SessionRunner::worker_loop()
{
    std::unique_lock lock(worker_mutex_);
    for (;;) {
        worker_cv_.wait(lock, [&] { return worker_stop_ || slot_; });
        if (!slot_) return;
        auto [clip, now] = std::move(*slot_);
        slot_.reset();
        busy_ = true;
        lock.unlock();
        try {
            session_->tick(now);
            session_->process_clip(clip, now);
            session_->save();
        } catch (const std::exception&) {
            // the session logs stage failures itself; anything else must not kill the worker
        }
        lock.lock();
        busy_ = false;
        worker_cv_.notify_all();
    }
}

void SessionRunner::drain_worker()
{
    if (!worker_.joinable()) return;
    {
        std::unique_lock lock(worker_mutex_);
        worker_cv_.wait(lock, [&] { return !busy_ && !slot_; });
        worker_stop_ = true;
    }
    worker_cv_.notify_all();
    worker_.join();
}

void SessionRunner::ticker_loop()
{
    while (!stopping_) {
        std::this_thread::sleep_for(options_.tick);
        const Micros t = now();
        std::vector<midi::Clip> due;
        {
            std::lock_guard lock(feed_mutex_);
            if (stopping_) break;
            due = ingest_.close_due_windows(t);
            for (const auto& clip : due) dispatch(clip, t);
        }
        session_->tick(t);
    }
}

void SessionRunner::reader_loop()
{
    while (auto e = source_->next()) {
        try {
            feed(*e);
        } catch (const midi::MidiError&) {
        }
        if (stopping_) break;
    }
    // End of stream closes the session without waiting for an explicit stop.
    if (!stopping_) stop();
}

void SessionRunner::stop()
{
    std::unique_lock stop_lock(stop_mutex_);
    if (finished_) return;
    if (stopping_.exchange(true)) {
        finished_cv_.wait(stop_lock, [&] { return finished_.load(); });
        return;
    }
    if (source_) source_->stop();
    if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id()) reader_.join();
    if (ticker_.joinable()) ticker_.join();

    Micros end = now();
    {
        std::lock_guard lock(feed_mutex_);
        const Micros window_end = ingest_.window_end();
        auto clip = ingest_.flush();
        if (!options_.wall_clock) end = ingest_.window_start();
        if (clip) {
            if (!options_.wall_clock) end = window_end;
            if (options_.synchronous) {
                session_->tick(end);
                session_->process_clip(*clip, end);
            } else {
                std::unique_lock lock(worker_mutex_);
                worker_cv_.wait(lock, [&] { return !busy_ && !slot_; });
                slot_.emplace(*clip, end);
                worker_cv_.notify_all();
            }
        }
    }
    drain_worker();
    session_->finish(end);
    session_->save();
    finished_ = true;
    finished_cv_.notify_all();
}

void SessionRunner::wait()
{
    std::unique_lock lock(stop_mutex_);
    finished_cv_.wait(lock, [&] { return finished_.load(); });
}

}  // namespace synesthete::session
