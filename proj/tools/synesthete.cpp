// Command-line front end: serve, replay, analyze, export.

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "synesthete/abc/codec.hpp"
#include "synesthete/analysis/analysis.hpp"
#include "synesthete/llm/prompts.hpp"
#include "synesthete/midi/ingest_buffer.hpp"
#include "synesthete/midi/smf_reader.hpp"
#include "synesthete/midi/sources.hpp"
#include "synesthete/session/config.hpp"
#include "synesthete/session/runner.hpp"
#include "synesthete/session/server.hpp"
#include "synesthete/session/session.hpp"

using namespace synesthete;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int)
{
    g_stop = true;
}

session::SessionConfig load(const std::string& path, const std::string& data_dir)
{
    session::SessionConfig c = path.empty() ? session::SessionConfig{} : session::load_config(path);
    if (!data_dir.empty()) c.data_dir = data_dir;
    return c;
}

int serve(const std::string& config_path, const std::string& data_dir, const std::string& host, int port,
          const std::string& device)
{
    auto config = load(config_path, data_dir);
    if (!host.empty()) config.host = host;
    if (port >= 0) config.port = port;

    session::SessionService service(config);
    session::HttpServer server(service);
    const int bound = server.bind(config.host, config.port);
    server.start();
    std::cerr << "listening on http://" << config.host << ':' << bound << '\n';
    if (!device.empty()) {
        const auto st = service.start_session(json{{"source", "device"}, {"path", device}});
        std::cerr << "session " << st.at("session").get<std::string>() << " reading " << device << '\n';
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop_all();
    server.stop();
    return 0;
}

int replay(const std::string& midi_path, const std::string& config_path, const std::string& data_dir,
           std::string id, const std::string& print)
{
    const auto config = load(config_path, data_dir);
    if (id.empty()) id = session::make_session_id();
    midi::FileReplaySource source(midi_path);
    session::Session s(id, config, session::make_backends(config), std::filesystem::path(config.data_dir) / id);
    const std::size_t clips = session::run_replay(s, source);

    const json record = s.record();
    if (print == "record") {
        std::cout << record.dump(2) << '\n';
    } else if (print == "canonical") {
        std::cout << session::canonical_record(record).dump(2) << '\n';
    } else {
        std::size_t images = 0, fallbacks = 0;
        for (const auto& e : record.at("log")) {
            if (e.at("type") != "clip" || e.value("status", "") != "generated") continue;
            ++images;
            if (e.at("completion").at("fallback").get<bool>()) ++fallbacks;
        }
        std::cout << json{{"session", id},
                          {"dir", s.dir().string()},
                          {"clips", clips},
                          {"images", images},
                          {"fallbacks", fallbacks},
                          {"digest", session::canonical_digest(record)}}
                         .dump(2)
                  << '\n';
    }
    return 0;
}

int analyze(const std::string& midi_path, double window_s, const std::string& meter_text, const std::string& ask,
            const session::SessionConfig& config)
{
    const abc::Meter meter = abc::parse_meter(meter_text);
    analysis::AnalysisConfig cfg;
    cfg.meter = meter;
    midi::IngestBuffer ingest(static_cast<midi::Micros>(std::llround(window_s * 1e6)));
    std::vector<midi::Clip> clips;
    for (const auto& e : midi::replay_midi_file(midi_path)) {
        for (auto& c : ingest.close_due_windows(e.timestamp)) clips.push_back(std::move(c));
        try {
            ingest.push_event(e);
        } catch (const midi::MidiError&) {
        }
    }
    if (auto c = ingest.flush()) clips.push_back(std::move(*c));

    const auto results = analysis::analyze_batch(clips, cfg);
    json out = json::array();
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const auto& a = results[i];
        const int bpm = static_cast<int>(std::lround(a.features.tempo_bpm));
        out.push_back({{"clip_index", clips[i].clip_index},
                       {"features", a.features},
                       {"emotion", a.emotion},
                       {"abc", abc::encode_clip(clips[i], bpm, meter, a.features.key).text}});
        if (ask.empty()) continue;
        // Put one of the prompt templates to the configured LLM backend.
        const auto& t = llm::prompt_template(llm::template_from_string(ask));
        llm::CompletionRequest req;
        req.model = config.llm.model;
        req.prompt = llm::build_prompt(t.id, out.back().at("abc").get<std::string>());
        req.temperature = config.divergent_temperature;
        req.max_tokens = t.token_budget;
        req.seed = config.llm.seed;
        req.clip_index = clips[i].clip_index;
        static const auto backend = session::make_backends(config).llm;
        out.back()["prompt"] = req.prompt;
        out.back()["answer"] = backend->complete(req).text;
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int export_session(const std::string& id, const std::string& config_path, const std::string& data_dir, bool canonical)
{
    const auto config = load(config_path, data_dir);
    const auto record = session::load_record(std::filesystem::path(config.data_dir) / id / "record.json");
    std::cout << (canonical ? session::canonical_record(record) : record).dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Live music-to-image sessions"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path, data_dir;
    app.add_option("-c,--config", config_path, "session config (JSON)")->check(CLI::ExistingFile);
    app.add_option("-d,--data-dir", data_dir, "directory holding session records");

    auto* serve_cmd = app.add_subcommand("serve", "run the HTTP API");
    std::string host, device;
    int port = -1;
    serve_cmd->add_option("--host", host, "listen address");
    serve_cmd->add_option("--port", port, "listen port (0 picks one)");
    serve_cmd->add_option("--device", device, "raw MIDI device to start a session on");

    auto* replay_cmd = app.add_subcommand("replay", "run a MIDI file through the pipeline");
    std::string midi_path, id, print = "summary";
    replay_cmd->add_option("midi", midi_path, "standard MIDI file")->required()->check(CLI::ExistingFile);
    replay_cmd->add_option("--id", id, "session id (default: generated)");
    replay_cmd->add_option("--print", print, "summary | record | canonical")
        ->check(CLI::IsMember({"summary", "record", "canonical"}));

    auto* analyze_cmd = app.add_subcommand("analyze", "print features, emotion and ABC per clip");
    double window_s = 10;
    std::string meter = "4/4";
    analyze_cmd->add_option("midi", midi_path, "standard MIDI file")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--window", window_s, "clip length in seconds")->check(CLI::Range(1.0, 120.0));
    analyze_cmd->add_option("--meter", meter, "meter used for bar lines");
    std::string ask;
    analyze_cmd->add_option("--ask", ask, "also send this prompt template to the LLM backend")
        ->check(CLI::IsMember({"features", "emotion", "emotion3", "imagery"}));

    auto* export_cmd = app.add_subcommand("export", "print a stored session record");
    bool canonical = false;
    export_cmd->add_option("session", id, "session id")->required();
    export_cmd->add_flag("--canonical", canonical, "drop ids, wall-clock times and latencies");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*serve_cmd) return serve(config_path, data_dir, host, port, device);
        if (*replay_cmd) return replay(midi_path, config_path, data_dir, id, print);
        if (*analyze_cmd) return analyze(midi_path, window_s, meter, ask, load(config_path, data_dir));
        if (*export_cmd) return export_session(id, config_path, data_dir, canonical);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
