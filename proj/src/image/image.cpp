#include "synesthete/image/image.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>
#include <png.h>

#include <nlohmann/json.hpp>

namespace synesthete::image {

namespace {

constexpr std::array<const char*, 4> kStyleNames = {"photorealistic", "abstract", "geometric", "painterly"};

constexpr std::array<const char*, 4> kStyleClauses = {
    "photorealistic, natural light, fine detail",
    "abstract, surreal, non-photorealistic",
    "geometric shapes, clean lines, flat color fields",
    "painterly, visible brush strokes, impressionist",
};

// 5x7 glyphs, one byte per row, low five bits used.
struct Glyph {
    char c;
    std::array<std::uint8_t, 7> rows;
};

constexpr std::array<Glyph, 36> kFont = {{
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
}};

const Glyph* glyph(char c)
{
    for (const auto& g : kFont) {
        if (g.c == c) return &g;
    }
    return nullptr;
}

struct Canvas {
    int w, h;
    std::vector<std::uint8_t> rgb;

    Canvas(int width, int height) : w(width), h(height), rgb(static_cast<std::size_t>(width) * height * 3) {}

    void set(int x, int y, std::array<std::uint8_t, 3> c)
    {
        if (x < 0 || y < 0 || x >= w || y >= h) return;
        std::memcpy(&rgb[(static_cast<std::size_t>(y) * w + x) * 3], c.data(), 3);
    }

    void text(const std::string& s, int x0, int y0, int scale, std::array<std::uint8_t, 3> c)
    {
        int x = x0;
        for (char ch : s) {
            if (const Glyph* g = glyph(ch)) {
                for (int row = 0; row < 7; ++row) {
                    for (int col = 0; col < 5; ++col) {
                        if (!(g->rows[row] & (0x10 >> col))) continue;
                        for (int dy = 0; dy < scale; ++dy)
                            for (int dx = 0; dx < scale; ++dx) set(x + col * scale + dx, y0 + row * scale + dy, c);
                    }
                }
            }
            x += 6 * scale;
        }
    }
};

std::uint64_t mix(std::uint64_t z)
{
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint8_t to_byte(double v)
{
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::string caption(const std::string& prompt, int max_words)
{
    std::istringstream is(prompt);
    std::string out, w;
    for (int n = 0; n < max_words && is >> w;) {
        std::string clean;
        for (char c : w) {
            if (std::isalnum(static_cast<unsigned char>(c))) clean += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        if (clean.empty()) continue;
        if (!out.empty()) out += ' ';
        out += clean;
        ++n;
    }
    return out;
}

void write_to_vector(png_structp png, png_bytep data, png_size_t length)
{
    auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

Bytes placeholder_png()
{
    Canvas c(128, 128);
    for (int y = 0; y < c.h; ++y)
        for (int x = 0; x < c.w; ++x) c.set(x, y, {48, 48, 52});
    c.text("NO", 4, 48, 2, {200, 200, 200});
    c.text("IMAGE", 4, 68, 2, {200, 200, 200});
    return encode_png(c.rgb, c.w, c.h);
}

}  // namespace

const char* to_string(StyleTag tag)
{
    return kStyleNames[static_cast<int>(tag)];
}

StyleTag style_from_string(const std::string& name)
{
    for (std::size_t i = 0; i < kStyleNames.size(); ++i) {
        if (name == kStyleNames[i]) return static_cast<StyleTag>(i);
    }
    throw std::invalid_argument("unknown style '" + name + "'");
}

const char* style_clause(StyleTag tag)
{
    return kStyleClauses[static_cast<int>(tag)];
}

std::string styled_prompt(const std::string& prompt, StyleTag tag)
{
    return prompt + ", " + style_clause(tag);
}

void validate(const ImageRequest& request)
{
    if (request.prompt.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw std::invalid_argument("image prompt is empty");
    }
    const auto in_range = [](int v) { return v >= kMinSide && v <= kMaxSide; };
    if (!in_range(request.size.width) || !in_range(request.size.height)) {
        throw std::invalid_argument("image size " + std::to_string(request.size.width) + "x" +
                                    std::to_string(request.size.height) + " outside " + std::to_string(kMinSide) +
                                    ".." + std::to_string(kMaxSide));
    }
}

Bytes encode_png(const std::vector<std::uint8_t>& rgb, int width, int height)
{
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw ImageError("pixel buffer size mismatch");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ImageError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    Bytes out;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        throw ImageError("PNG encoding failed");
    }
    png_set_write_fn(png, &out, write_to_vector, nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(&rgb[static_cast<std::size_t>(y) * width * 3]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

ImageSize png_size(const Bytes& png)
{
    static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (png.size() < 24 || std::memcmp(png.data(), kSig, 8) != 0 || std::memcmp(&png[12], "IHDR", 4) != 0) {
        throw ImageError("not a PNG image");
    }
    const auto be32 = [&](std::size_t i) {
        return static_cast<int>((png[i] << 24) | (png[i + 1] << 16) | (png[i + 2] << 8) | png[i + 3]);
    };
    return ImageSize{be32(16), be32(20)};
}

std::string sha256_hex(const void* data, std::size_t size)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr) != 1) throw ImageError("SHA-256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[md[i] >> 4];
        out += kHex[md[i] & 15];
    }
    return out;
}

Bytes base64_decode(const std::string& text)
{
    std::string s;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    }
    if (s.size() % 4 != 0) throw ImageError("base64 length is not a multiple of 4");
    Bytes out(s.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(s.data()), static_cast<int>(s.size()));
    if (n < 0) throw ImageError("invalid base64");
    std::size_t pad = 0;
    if (!s.empty() && s.back() == '=') ++pad;
    if (s.size() > 1 && s[s.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

Bytes MockImageBackend::render(const ImageRequest& request)
{
    validate(request);
    const std::string key = request.prompt + '\0' + std::to_string(request.seed) + '\0' + to_string(request.style) +
                            '\0' + std::to_string(request.size.width) + 'x' + std::to_string(request.size.height);
    const std::string digest = sha256_hex(key.data(), key.size());
    std::array<std::uint8_t, 32> k{};
    for (int i = 0; i < 32; ++i) k[i] = static_cast<std::uint8_t>(std::stoi(digest.substr(i * 2, 2), nullptr, 16));
    std::uint64_t base_seed = 0;
    std::memcpy(&base_seed, k.data() + 16, sizeof base_seed);

    const int w = request.size.width;
    const int h = request.size.height;
    Canvas c(w, h);
    const double angle = k[6] / 255.0 * 6.283185307179586;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double norm = std::abs(ca) * w + std::abs(sa) * h;
    const int tile = 16 + k[7] % 64;
    const double freq = 0.01 + k[8] / 255.0 * 0.04;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double t = ((x - w / 2.0) * ca + (y - h / 2.0) * sa) / norm + 0.5;
            double shade = 1.0;
            switch (request.style) {
            case StyleTag::photorealistic: {
                const double dx = (x - w / 2.0) / w, dy = (y - h / 2.0) / h;
                shade = 1.0 - 0.6 * (dx * dx + dy * dy);
                break;
            }
            case StyleTag::abstract:
                t += 0.25 * std::sin(x * freq + 3.0 * std::sin(y * freq * 0.7));
                break;
            case StyleTag::geometric:
                if (((x / tile) + (y / tile)) % 2) t = 1.0 - t;
                break;
            case StyleTag::painterly: {
                const std::uint64_t n = mix(base_seed ^ (static_cast<std::uint64_t>(x / 4) << 32) ^ static_cast<std::uint64_t>(y / 4));
                t += ((n & 0xFF) / 255.0 - 0.5) * 0.2;
                break;
            }
            }
            t = std::clamp(t, 0.0, 1.0);
            c.set(x, y,
                  {to_byte((k[0] + (k[3] - k[0]) * t) * shade), to_byte((k[1] + (k[4] - k[1]) * t) * shade),
                   to_byte((k[2] + (k[5] - k[2]) * t) * shade)});
        }
    }

    const int scale = std::max(1, w / 160);
    const int y0 = h - 7 * scale - 2 * scale;
    const std::string label = caption(request.prompt, 3);
    c.text(label, 2 * scale + scale / 2 + 1, y0 + 1, scale, {0, 0, 0});
    c.text(label, 2 * scale, y0, scale, {255, 255, 255});
    return encode_png(c.rgb, w, h);
}

ImageStore::ImageStore(std::filesystem::path dir) : dir_(std::move(dir))
{
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ImageStore::path(const std::string& digest) const
{
    return dir_ / (digest + ".png");
}

bool ImageStore::contains(const std::string& digest) const
{
    return std::filesystem::exists(path(digest));
}

std::string ImageStore::put(const Bytes& png)
{
    const std::string digest = sha256_hex(png.data(), png.size());
    std::lock_guard lock(mutex_);
    const auto target = path(digest);
    if (std::filesystem::exists(target)) return digest;
    const auto tmp = dir_ / (digest + ".png.tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
        if (!out) throw ImageError("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
    return digest;
}

std::optional<Bytes> ImageStore::get(const std::string& digest) const
{
    if (digest.size() != 64 || digest.find_first_not_of("0123456789abcdef") != std::string::npos) return std::nullopt;
    std::ifstream in(path(digest), std::ios::binary);
    if (!in) return std::nullopt;
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string ImageStore::placeholder()
{
    static const Bytes png = placeholder_png();
    return put(png);
}

std::string image_ref(const std::string& digest)
{
    return "images/" + digest + ".png";
}

std::string digest_from_ref(const std::string& ref)
{
    constexpr std::string_view prefix = "images/";
    constexpr std::string_view suffix = ".png";
    if (ref.size() != prefix.size() + 64 + suffix.size() || !ref.starts_with(prefix) || !ref.ends_with(suffix)) return {};
    std::string d = ref.substr(prefix.size(), 64);
    if (d.find_first_not_of("0123456789abcdef") != std::string::npos) return {};
    return d;
}

void to_json(nlohmann::json& j, const ImageEvent& e)
{
    j = nlohmann::json{
        {"clip_index", e.clip_index},
        {"prompt", e.prompt},
        {"image_ref", e.image_ref},
        {"backend", e.backend_id},
        {"gen_latency_ms", e.gen_latency_ms},
        {"requested_at_us", e.requested_at},
        {"displayed_at_us", e.displayed_at ? nlohmann::json(*e.displayed_at) : nlohmann::json(nullptr)},
        {"suppressed", e.suppressed},
        {"error", e.error ? nlohmann::json(*e.error) : nlohmann::json(nullptr)},
    };
}

void from_json(const nlohmann::json& j, ImageEvent& e)
{
    e.clip_index = j.at("clip_index").get<int>();
    e.prompt = j.at("prompt").get<std::string>();
    e.image_ref = j.at("image_ref").get<std::string>();
    e.backend_id = j.value("backend", "");
    e.gen_latency_ms = j.at("gen_latency_ms").get<double>();
    e.requested_at = j.at("requested_at_us").get<std::int64_t>();
    const auto& d = j.at("displayed_at_us");
    e.displayed_at = d.is_null() ? std::nullopt : std::optional<std::int64_t>(d.get<std::int64_t>());
    e.suppressed = j.at("suppressed").get<bool>();
    const auto& err = j.at("error");
    e.error = err.is_null() ? std::nullopt : std::optional<std::string>(err.get<std::string>());
}

ImageEvent generate(const ImageRequest& request, ImageBackend& backend, ImageStore& store, int clip_index)
{
    validate(request);
    ImageRequest styled = request;
    styled.prompt = styled_prompt(request.prompt, request.style);

    ImageEvent event;
    event.clip_index = clip_index;
    event.prompt = styled.prompt;
    event.backend_id = backend.id();
    const auto start = std::chrono::steady_clock::now();
    try {
        const Bytes png = backend.render(styled);
        png_size(png);
        event.image_ref = image_ref(store.put(png));
    } catch (const std::exception& e) {
        event.error = e.what();
        event.image_ref = image_ref(store.placeholder());
    }
    event.gen_latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return event;
}

}  // namespace synesthete::image
