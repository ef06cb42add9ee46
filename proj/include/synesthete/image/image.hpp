#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "synesthete/visual/mapping.hpp"

namespace synesthete::image {

class ImageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ImageTimeout : public ImageError {
public:
    using ImageError::ImageError;
};

enum class StyleTag { photorealistic, abstract, geometric, painterly };

const char* to_string(StyleTag tag);
StyleTag style_from_string(const std::string& name);

/// Phrase appended to the prompt for each style.
const char* style_clause(StyleTag tag);

/// "<prompt>, <style clause>".
std::string styled_prompt(const std::string& prompt, StyleTag tag);

struct ImageSize {
    int width = 768;
    int height = 768;
    bool operator==(const ImageSize&) const = default;
};

inline constexpr int kMinSide = 64;
inline constexpr int kMaxSide = 2048;

struct ImageRequest {
    std::string prompt;
    StyleTag style = StyleTag::photorealistic;
    std::uint64_t seed = 0;
    ImageSize size;
    visual::VisualParams visual_params;
};

/// Throws std::invalid_argument for an empty prompt or out-of-range size.
void validate(const ImageRequest& request);

using Bytes = std::vector<std::uint8_t>;

class ImageBackend {
public:
    virtual ~ImageBackend() = default;
    /// `request.prompt` already carries the style clause. Returns PNG bytes.
    virtual Bytes render(const ImageRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Procedural stand-in: a seeded gradient with a style pattern and the
/// prompt's first words drawn on top. Output depends only on prompt, seed,
/// style and size.
class MockImageBackend : public ImageBackend {
public:
    Bytes render(const ImageRequest& request) override;
    std::string id() const override { return "mock"; }
};

struct HttpImageConfig {
    std::string base_url = "http://127.0.0.1:7860";
    std::string path = "/generate";
    int steps = 1;
    std::chrono::milliseconds timeout{30'000};
};

/// Generic text-to-image endpoint: POST {prompt, seed, steps, width, height},
/// answer {"image": "<base64 png>"}.
class HttpImageBackend : public ImageBackend {
public:
    explicit HttpImageBackend(HttpImageConfig config) : config_(std::move(config)) {}
    Bytes render(const ImageRequest& request) override;
    std::string id() const override { return "http"; }

private:
    HttpImageConfig config_;
};

/// RGB8 image encoded as PNG with fixed settings, so equal pixels give equal
/// bytes.
Bytes encode_png(const std::vector<std::uint8_t>& rgb, int width, int height);

/// Width and height from the IHDR chunk; throws ImageError if not a PNG.
ImageSize png_size(const Bytes& png);

std::string sha256_hex(const void* data, std::size_t size);
Bytes base64_decode(const std::string& text);

/// Content-addressed PNG directory: each image lives at <sha256>.png.
class ImageStore {
public:
    explicit ImageStore(std::filesystem::path dir);

    /// Writes the bytes unless already present and returns the digest.
    std::string put(const Bytes& png);
    bool contains(const std::string& digest) const;
    std::filesystem::path path(const std::string& digest) const;
    std::optional<Bytes> get(const std::string& digest) const;
    const std::filesystem::path& dir() const { return dir_; }

    /// Digest of the stored placeholder image, written on first use.
    std::string placeholder();

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

/// Reference form used in events: "images/<digest>.png".
std::string image_ref(const std::string& digest);

/// Pulls the digest back out of an image_ref, or "" if malformed.
std::string digest_from_ref(const std::string& ref);

struct ImageEvent {
    int clip_index = 0;
    std::string prompt;           // as sent to the backend
    std::string image_ref;
    std::string backend_id;
    double gen_latency_ms = 0;
    std::int64_t requested_at = 0;              // session clock, µs
    std::optional<std::int64_t> displayed_at;   // unset while held or when suppressed
    bool suppressed = false;
    std::optional<std::string> error;
};

void to_json(nlohmann::json& j, const ImageEvent& e);
void from_json(const nlohmann::json& j, ImageEvent& e);

/// Styles the prompt, calls the backend and stores the result. Backend
/// failures produce the placeholder image with `error` set; this never throws
/// for backend errors. Precondition violations throw std::invalid_argument.
ImageEvent generate(const ImageRequest& request, ImageBackend& backend, ImageStore& store, int clip_index = 0);

}  // namespace synesthete::image
