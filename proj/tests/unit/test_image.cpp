#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <png.h>
#include <unistd.h>

#include "synesthete/image/image.hpp"
#include "synesthete/image/pacing.hpp"

using namespace synesthete::image;
using namespace std::chrono_literals;

namespace {

std::filesystem::path temp_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() /
               ("synesthete_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    return dir;
}

// Decodes with libpng's simplified API, independent of our encoder.
std::vector<std::uint8_t> decode_rgb(const Bytes& bytes, int& w, int& h)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) return {};
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> out(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.data(), 0, nullptr)) return {};
    w = static_cast<int>(img.width);
    h = static_cast<int>(img.height);
    return out;
}

std::string base64(const Bytes& b)
{
    std::string out(4 * ((b.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), b.data(), static_cast<int>(b.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

ImageRequest request(const std::string& prompt, std::uint64_t seed = 7, StyleTag style = StyleTag::photorealistic)
{
    ImageRequest r;
    r.prompt = prompt;
    r.seed = seed;
    r.style = style;
    r.size = {128, 96};
    return r;
}

class RecordingBackend : public ImageBackend {
public:
    Bytes render(const ImageRequest& r) override
    {
        seen = r.prompt;
        return MockImageBackend().render(r);
    }
    std::string id() const override { return "recording"; }
    std::string seen;
};

class BrokenBackend : public ImageBackend {
public:
    Bytes render(const ImageRequest&) override { throw ImageError("backend down"); }
    std::string id() const override { return "broken"; }
};

class GarbageBackend : public ImageBackend {
public:
    Bytes render(const ImageRequest&) override { return {1, 2, 3}; }
    std::string id() const override { return "garbage"; }
};

}  // namespace

TEST(Style, NamesAndClauses)
{
    for (auto s : {StyleTag::photorealistic, StyleTag::abstract, StyleTag::geometric, StyleTag::painterly}) {
        EXPECT_EQ(style_from_string(to_string(s)), s);
    }
    EXPECT_THROW(style_from_string("cubist"), std::invalid_argument);
    EXPECT_STREQ(style_clause(StyleTag::abstract), "abstract, surreal, non-photorealistic");
    EXPECT_EQ(styled_prompt("a lake", StyleTag::abstract), "a lake, abstract, surreal, non-photorealistic");
}

TEST(Request, Validation)
{
    EXPECT_THROW(validate(request("")), std::invalid_argument);
    EXPECT_THROW(validate(request(" \n")), std::invalid_argument);
    auto r = request("x");
    r.size = {32, 768};
    EXPECT_THROW(validate(r), std::invalid_argument);
    r.size = {768, 4096};
    EXPECT_THROW(validate(r), std::invalid_argument);
    r.size = {768, 768};
    EXPECT_NO_THROW(validate(r));
    EXPECT_EQ(ImageRequest{}.size, (ImageSize{768, 768}));
}

TEST(Digest, KnownVectors)
{
    EXPECT_EQ(sha256_hex("abc", 3), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex("", 0), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Base64, Decode)
{
    const auto s = [](const Bytes& b) { return std::string(b.begin(), b.end()); };
    EXPECT_EQ(s(base64_decode("aGVsbG8=")), "hello");
    EXPECT_EQ(s(base64_decode("aGk=")), "hi");
    EXPECT_EQ(s(base64_decode("YWJj")), "abc");
    EXPECT_EQ(s(base64_decode("aGVs\nbG8=")), "hello");
    EXPECT_TRUE(base64_decode("").empty());
    EXPECT_THROW(base64_decode("abc"), ImageError);
    std::mt19937 rng(3);
    for (int i = 0; i < 50; ++i) {
        Bytes b(rng() % 40);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        EXPECT_EQ(base64_decode(base64(b)), b);
    }
}

TEST(Png, EncodeDecodesToSamePixels)
{
    std::vector<std::uint8_t> rgb(5 * 3 * 3);
    for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>(i * 17);
    const Bytes png = encode_png(rgb, 5, 3);
    EXPECT_EQ(png_size(png), (ImageSize{5, 3}));
    int w = 0, h = 0;
    EXPECT_EQ(decode_rgb(png, w, h), rgb);
    EXPECT_EQ(encode_png(rgb, 5, 3), png);
    EXPECT_THROW(encode_png(rgb, 4, 3), ImageError);
    EXPECT_THROW(png_size(Bytes{1, 2, 3}), ImageError);
}

TEST(MockImage, PureFunctionOfInputs)
{
    MockImageBackend mock;
    const Bytes a = mock.render(request("a moonlit lake"));
    const Bytes b = mock.render(request("a moonlit lake"));
    EXPECT_EQ(sha256_hex(a.data(), a.size()), sha256_hex(b.data(), b.size()));
    EXPECT_EQ(png_size(a), (ImageSize{128, 96}));
    int w = 0, h = 0;
    EXPECT_EQ(decode_rgb(a, w, h).size(), 128u * 96u * 3u);

    EXPECT_NE(mock.render(request("a moonlit lake", 8)), a);
    EXPECT_NE(mock.render(request("a sunlit lake")), a);
    EXPECT_NE(mock.render(request("a moonlit lake", 7, StyleTag::geometric)), a);
    auto bigger = request("a moonlit lake");
    bigger.size = {96, 128};
    EXPECT_EQ(png_size(mock.render(bigger)), (ImageSize{96, 128}));

    // Visual params reach the image only through the prompt.
    auto tinted = request("a moonlit lake");
    tinted.visual_params.brightness = -0.9;
    EXPECT_EQ(mock.render(tinted), a);
}

TEST(MockImage, AllStylesRender)
{
    MockImageBackend mock;
    for (auto s : {StyleTag::photorealistic, StyleTag::abstract, StyleTag::geometric, StyleTag::painterly}) {
        const Bytes png = mock.render(request("storm over the sea", 1, s));
        int w = 0, h = 0;
        EXPECT_FALSE(decode_rgb(png, w, h).empty()) << to_string(s);
    }
}

TEST(Store, ContentAddressed)
{
    const auto dir = temp_dir("store");
    ImageStore store(dir);
    const Bytes png = MockImageBackend().render(request("x"));
    const std::string d = store.put(png);
    EXPECT_EQ(d, sha256_hex(png.data(), png.size()));
    EXPECT_EQ(store.put(png), d);
    EXPECT_TRUE(store.contains(d));
    EXPECT_EQ(store.path(d), dir / (d + ".png"));
    EXPECT_EQ(store.get(d), png);
    EXPECT_FALSE(store.get("../etc/passwd"));
    EXPECT_FALSE(store.get(std::string(64, 'a')));

    const std::string p = store.placeholder();
    EXPECT_EQ(store.placeholder(), p);
    ASSERT_TRUE(store.get(p));
    EXPECT_EQ(png_size(*store.get(p)), (ImageSize{128, 128}));

    EXPECT_EQ(image_ref(d), "images/" + d + ".png");
    EXPECT_EQ(digest_from_ref(image_ref(d)), d);
    EXPECT_EQ(digest_from_ref("images/xyz.png"), "");
    std::filesystem::remove_all(dir);
}

TEST(Generate, StyledPromptReachesBackend)
{
    const auto dir = temp_dir("gen");
    ImageStore store(dir);
    RecordingBackend rec;
    const auto e = generate(request("a foggy pier", 7, StyleTag::abstract), rec, store, 4);
    EXPECT_EQ(rec.seen, "a foggy pier, abstract, surreal, non-photorealistic");
    EXPECT_EQ(e.prompt, rec.seen);
    EXPECT_EQ(e.clip_index, 4);
    EXPECT_FALSE(e.error);
    EXPECT_TRUE(store.contains(digest_from_ref(e.image_ref)));
    EXPECT_EQ(e.backend_id, "recording");
    EXPECT_GE(e.gen_latency_ms, 0);
    std::filesystem::remove_all(dir);
}

TEST(Generate, FailuresGivePlaceholderAndLoopContinues)
{
    const auto dir = temp_dir("fail");
    ImageStore store(dir);
    BrokenBackend broken;
    GarbageBackend garbage;
    MockImageBackend mock;
    const auto e1 = generate(request("a"), broken, store, 0);
    const auto e2 = generate(request("b"), garbage, store, 1);
    const auto e3 = generate(request("c"), mock, store, 2);
    ASSERT_TRUE(e1.error);
    EXPECT_EQ(*e1.error, "backend down");
    ASSERT_TRUE(e2.error);
    EXPECT_EQ(e1.image_ref, image_ref(store.placeholder()));
    EXPECT_EQ(e2.image_ref, e1.image_ref);
    EXPECT_FALSE(e3.error);
    EXPECT_NE(e3.image_ref, e1.image_ref);
    EXPECT_TRUE(store.contains(digest_from_ref(e1.image_ref)));
    EXPECT_THROW(generate(request(""), mock, store), std::invalid_argument);
    std::filesystem::remove_all(dir);
}

TEST(Event, JsonRoundTrip)
{
    ImageEvent e;
    e.clip_index = 3;
    e.prompt = "p";
    e.image_ref = "images/x.png";
    e.backend_id = "mock";
    e.gen_latency_ms = 12.5;
    e.requested_at = 30'000'000;
    e.displayed_at = 30'500'000;
    const nlohmann::json j = e;
    EXPECT_TRUE(j.at("error").is_null());
    const auto back = j.get<ImageEvent>();
    EXPECT_EQ(back.displayed_at, e.displayed_at);
    EXPECT_EQ(back.prompt, "p");
    e.displayed_at.reset();
    e.suppressed = true;
    e.error = "boom";
    const auto back2 = nlohmann::json(e).get<ImageEvent>();
    EXPECT_FALSE(back2.displayed_at);
    EXPECT_TRUE(back2.suppressed);
    EXPECT_EQ(back2.error, "boom");
}

class HttpImage : public ::testing::Test {
protected:
    void SetUp() override
    {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void TearDown() override
    {
        server_.stop();
        thread_.join();
    }
    HttpImageConfig config(std::chrono::milliseconds timeout = 2000ms) const
    {
        HttpImageConfig c;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_);
        c.timeout = timeout;
        return c;
    }
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

TEST_F(HttpImage, DecodesBase64Png)
{
    const Bytes png = MockImageBackend().render(request("served"));
    nlohmann::json seen;
    server_.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        res.set_content(nlohmann::json{{"image", base64(png)}}.dump(), "application/json");
    });
    HttpImageBackend backend(config());
    auto r = request("a lake", 42);
    EXPECT_EQ(backend.render(r), png);
    EXPECT_EQ(seen.at("prompt"), "a lake");
    EXPECT_EQ(seen.at("seed"), 42);
    EXPECT_EQ(seen.at("steps"), 1);
    EXPECT_EQ(seen.at("width"), 128);
    EXPECT_EQ(seen.at("height"), 96);
}

TEST_F(HttpImage, ErrorsAndTimeout)
{
    server_.Post("/generate", [](const httplib::Request& req, httplib::Response& res) {
        const auto p = nlohmann::json::parse(req.body).at("prompt").get<std::string>();
        if (p.starts_with("slow")) {
            std::this_thread::sleep_for(600ms);
            res.set_content("{}", "application/json");
        } else if (p.starts_with("500")) {
            res.status = 500;
        } else {
            res.set_content(R"({"image":"aGVsbG8="})", "application/json");
        }
    });
    HttpImageBackend backend(config(150ms));
    EXPECT_THROW(backend.render(request("slow")), ImageTimeout);
    EXPECT_THROW(backend.render(request("500")), ImageError);
    EXPECT_THROW(backend.render(request("not png")), ImageError);

    const auto dir = temp_dir("http");
    ImageStore store(dir);
    const auto e = generate(request("500"), backend, store);
    EXPECT_TRUE(e.error);
    EXPECT_EQ(e.image_ref, image_ref(store.placeholder()));
    std::filesystem::remove_all(dir);
}

TEST(Pacing, FixedInterval)
{
    const auto fixed10 = Cadence::fixed(10);
    EXPECT_EQ(pacing_decide(12'000'000, 0, fixed10, false), Decision::display);
    EXPECT_EQ(pacing_decide(9'999'999, 0, fixed10, false), Decision::hold);
    EXPECT_EQ(pacing_decide(10'000'000, 0, fixed10, false), Decision::display);
    EXPECT_EQ(pacing_decide(0, std::nullopt, fixed10, false), Decision::display);
    EXPECT_EQ(Cadence{}, fixed10);
}

TEST(Pacing, PausedAlwaysHolds)
{
    PacingContext ctx;
    ctx.advance = true;
    for (const auto& c : {Cadence::fixed(10), Cadence::bar_aligned(4), Cadence::manual()}) {
        for (Micros t : {0LL, 10'000'000LL, 1'000'000'000LL}) {
            EXPECT_EQ(pacing_decide(t, std::nullopt, c, true, ctx), Decision::hold);
            EXPECT_EQ(pacing_decide(t, 0, c, true, ctx), Decision::hold);
        }
    }
}

TEST(Pacing, BarAlignedAt96Bpm)
{
    PacingContext ctx;  // 96 BPM, 4/4
    // 4 beats * 60 s / 96 = 2.5 s.
    EXPECT_EQ(bar_length(ctx), 2'500'000);
    const auto four = Cadence::bar_aligned(4);
    EXPECT_EQ(pacing_decide(8'000'000, 0, four, false, ctx), Decision::hold);     // 3.2 bars
    EXPECT_EQ(pacing_decide(10'000'000, 0, four, false, ctx), Decision::display);  // 4 bars
    EXPECT_EQ(pacing_decide(11'000'000, 0, four, false, ctx), Decision::hold);     // off the bar line
    EXPECT_EQ(pacing_decide(7'500'000, 0, four, false, ctx), Decision::hold);      // on a line, 3 bars
    EXPECT_EQ(pacing_decide(12'500'000, 0, four, false, ctx), Decision::display);

    EXPECT_EQ(next_display_time(8'000'000, 0, four, ctx), 10'000'000);
    EXPECT_EQ(next_display_time(10'300'000, 0, four, ctx), 12'500'000);
    EXPECT_EQ(next_display_time(1'000'000, std::nullopt, four, ctx), 2'500'000);

    ctx.tempo_bpm = 120;
    ctx.beats_per_bar = 3;
    EXPECT_EQ(bar_length(ctx), 1'500'000);
}

TEST(Pacing, Manual)
{
    PacingContext ctx;
    EXPECT_EQ(pacing_decide(100'000'000, 0, Cadence::manual(), false, ctx), Decision::hold);
    ctx.advance = true;
    EXPECT_EQ(pacing_decide(1, 0, Cadence::manual(), false, ctx), Decision::display);
    EXPECT_FALSE(next_display_time(0, 0, Cadence::manual(), ctx));
}

TEST(Pacing, FixedGapsNeverShorterThanInterval)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const double interval = 1 + static_cast<double>(rng() % 15);
        const auto c = Cadence::fixed(interval);
        std::optional<Micros> last;
        Micros t = 0;
        for (int i = 0; i < 40; ++i) {
            t += static_cast<Micros>(rng() % 20'000'000);
            const auto when = next_display_time(t, last, c);
            ASSERT_TRUE(when);
            ASSERT_GE(*when, t);
            ASSERT_EQ(pacing_decide(*when, last, c, false), Decision::display);
            if (last) {
                ASSERT_GE(*when - *last, static_cast<Micros>(interval * 1e6));
            }
            last = when;
            t = *when;
        }
    }
}

TEST(Pacing, BarAlignedNextTimeIsDisplayable)
{
    std::mt19937_64 rng(9);
    for (int i = 0; i < 500; ++i) {
        PacingContext ctx;
        ctx.tempo_bpm = 40 + static_cast<double>(rng() % 160);
        const auto c = Cadence::bar_aligned(1 + static_cast<int>(rng() % 8));
        const Micros last = static_cast<Micros>(rng() % 100'000'000);
        const Micros now = last + static_cast<Micros>(rng() % 60'000'000);
        const auto when = next_display_time(now, last, c, ctx);
        ASSERT_TRUE(when);
        ASSERT_GE(*when, now);
        ASSERT_EQ(pacing_decide(*when, last, c, false, ctx), Decision::display);
    }
}

TEST(Pacing, CadenceJson)
{
    const nlohmann::json j = Cadence::bar_aligned(2);
    EXPECT_EQ(j, (nlohmann::json{{"kind", "bar_aligned"}, {"bars", 2}}));
    EXPECT_EQ(j.get<Cadence>(), Cadence::bar_aligned(2));
    EXPECT_EQ(nlohmann::json(Cadence::fixed(5)).get<Cadence>(), Cadence::fixed(5));
    EXPECT_THROW(nlohmann::json({{"kind", "fixed"}, {"speed", 1}}).get<Cadence>(), std::invalid_argument);
    EXPECT_THROW(nlohmann::json({{"kind", "fixed"}, {"interval_s", 0}}).get<Cadence>(), std::invalid_argument);
    EXPECT_THROW(nlohmann::json({{"kind", "often"}}).get<Cadence>(), std::invalid_argument);
}
