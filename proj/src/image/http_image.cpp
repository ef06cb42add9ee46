#include <httplib.h>
#include <nlohmann/json.hpp>

#include "synesthete/image/image.hpp"

namespace synesthete::image {

Bytes HttpImageBackend::render(const ImageRequest& request)
{
    const nlohmann::json body = {
        {"prompt", request.prompt},
        {"seed", request.seed},
        {"steps", config_.steps},
        {"width", request.size.width},
        {"height", request.size.height},
    };
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(config_.path, body.dump(), "application/json");
    if (!res) {
        if (res.error() == httplib::Error::ConnectionTimeout ||
            std::chrono::steady_clock::now() - start + std::chrono::milliseconds(10) >= config_.timeout) {
            throw ImageTimeout("image request timed out");
        }
        throw ImageError("image request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) throw ImageError("image request returned HTTP " + std::to_string(res->status));

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw ImageError(std::string("malformed image response: ") + e.what());
    }
    std::string b64;
    if (j.contains("image") && j.at("image").is_string()) {
        b64 = j.at("image").get<std::string>();
    } else if (j.contains("images") && j.at("images").is_array() && !j.at("images").empty()) {
        b64 = j.at("images").at(0).get<std::string>();
    } else {
        throw ImageError("image response has no image");
    }
    Bytes png = base64_decode(b64);
    png_size(png);
    return png;
}

}  // namespace synesthete::image
