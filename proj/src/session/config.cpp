#include "synesthete/session/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace synesthete::session {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("wrong type for '" + (where.empty() ? std::string(key) : where + "." + key) + "'");
    }
}

void require(bool ok, const std::string& what)
{
    if (!ok) throw ConfigError(what);
}

}  // namespace

SessionConfig config_from_json(const json& j)
{
    SessionConfig c;
    check_keys(j, {"window_length_s", "meter", "mode", "llm", "image", "cadence", "visual", "server", "data_dir"}, "");
    read(j, "window_length_s", c.window_length_s, "");
    require(c.window_length_s >= 1 && c.window_length_s <= 120, "window_length_s must lie in [1, 120]");
    if (j.contains("meter")) {
        std::string m;
        read(j, "meter", m, "");
        try {
            c.meter = abc::parse_meter(m);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("meter: ") + e.what());
        }
    }
    if (j.contains("data_dir")) read(j, "data_dir", c.data_dir, "");

    if (j.contains("mode")) {
        const auto& m = j.at("mode");
        check_keys(m, {"initial", "divergent_temperature", "convergent_temperature"}, "mode");
        std::string initial = llm::to_string(c.initial_mode);
        read(m, "initial", initial, "mode");
        try {
            c.initial_mode = llm::mode_kind_from_string(initial);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("mode.initial: ") + e.what());
        }
        read(m, "divergent_temperature", c.divergent_temperature, "mode");
        read(m, "convergent_temperature", c.convergent_temperature, "mode");
    }
    require(c.divergent_temperature >= 0 && c.divergent_temperature <= 2 && c.convergent_temperature >= 0 &&
                c.convergent_temperature <= 2,
            "temperatures must lie in [0, 2]");

    if (j.contains("llm")) {
        const auto& l = j.at("llm");
        check_keys(l, {"backend", "model", "url", "path", "fixture", "timeout_s", "mock_fallback", "seed"}, "llm");
        read(l, "backend", c.llm.backend, "llm");
        read(l, "model", c.llm.model, "llm");
        read(l, "url", c.llm.url, "llm");
        read(l, "path", c.llm.path, "llm");
        read(l, "fixture", c.llm.fixture, "llm");
        read(l, "timeout_s", c.llm.timeout_s, "llm");
        read(l, "mock_fallback", c.llm.mock_fallback, "llm");
        read(l, "seed", c.llm.seed, "llm");
    }
    require(c.llm.backend == "mock" || c.llm.backend == "fixture" || c.llm.backend == "live",
            "llm.backend must be mock, fixture or live");
    require(c.llm.backend != "fixture" || !c.llm.fixture.empty(), "llm.fixture is required for the fixture backend");
    require(c.llm.timeout_s >= 0, "llm.timeout_s must be non-negative");

    if (j.contains("image")) {
        const auto& i = j.at("image");
        check_keys(i, {"backend", "url", "path", "steps", "timeout_s", "width", "height", "style", "seed"}, "image");
        read(i, "backend", c.image.backend, "image");
        read(i, "url", c.image.url, "image");
        read(i, "path", c.image.path, "image");
        read(i, "steps", c.image.steps, "image");
        read(i, "timeout_s", c.image.timeout_s, "image");
        read(i, "width", c.image.size.width, "image");
        read(i, "height", c.image.size.height, "image");
        read(i, "seed", c.image.seed, "image");
        std::string style = image::to_string(c.image.style);
        read(i, "style", style, "image");
        try {
            c.image.style = image::style_from_string(style);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("image.style: ") + e.what());
        }
    }
    require(c.image.backend == "mock" || c.image.backend == "live", "image.backend must be mock or live");
    require(c.image.size.width >= image::kMinSide && c.image.size.width <= image::kMaxSide &&
                c.image.size.height >= image::kMinSide && c.image.size.height <= image::kMaxSide,
            "image size out of range");
    require(c.image.steps >= 1 && c.image.timeout_s > 0, "image.steps and image.timeout_s must be positive");

    if (j.contains("cadence")) {
        try {
            c.cadence = j.at("cadence").get<image::Cadence>();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("cadence: ") + e.what());
        }
    }

    if (j.contains("visual")) {
        const auto& v = j.at("visual");
        check_keys(v, {"smoothing", "minor_delta", "clause_table"}, "visual");
        read(v, "smoothing", c.smoothing, "visual");
        read(v, "minor_delta", c.minor_delta, "visual");
        read(v, "clause_table", c.clause_table, "visual");
    }
    require(c.smoothing > 0 && c.smoothing <= 1, "visual.smoothing must lie in (0, 1]");

    if (j.contains("server")) {
        const auto& s = j.at("server");
        check_keys(s, {"host", "port"}, "server");
        read(s, "host", c.host, "server");
        read(s, "port", c.port, "server");
    }
    require(c.port >= 0 && c.port <= 65535, "server.port out of range");
    return c;
}

SessionConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const SessionConfig& c)
{
    return json{
        {"window_length_s", c.window_length_s},
        {"meter", abc::to_string(c.meter)},
        {"mode",
         {{"initial", llm::to_string(c.initial_mode)},
          {"divergent_temperature", c.divergent_temperature},
          {"convergent_temperature", c.convergent_temperature}}},
        {"llm",
         {{"backend", c.llm.backend},
          {"model", c.llm.model},
          {"url", c.llm.url},
          {"path", c.llm.path},
          {"fixture", c.llm.fixture},
          {"timeout_s", c.llm.timeout_s},
          {"mock_fallback", c.llm.mock_fallback},
          {"seed", c.llm.seed}}},
        {"image",
         {{"backend", c.image.backend},
          {"url", c.image.url},
          {"path", c.image.path},
          {"steps", c.image.steps},
          {"timeout_s", c.image.timeout_s},
          {"width", c.image.size.width},
          {"height", c.image.size.height},
          {"style", image::to_string(c.image.style)},
          {"seed", c.image.seed}}},
        {"cadence", c.cadence},
        {"visual", {{"smoothing", c.smoothing}, {"minor_delta", c.minor_delta}, {"clause_table", c.clause_table}}},
        {"server", {{"host", c.host}, {"port", c.port}}},
        {"data_dir", c.data_dir},
    };
}

}  // namespace synesthete::session
