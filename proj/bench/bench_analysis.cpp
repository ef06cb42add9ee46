#include <benchmark/benchmark.h>

#include <random>

#include "synesthete/abc/codec.hpp"
#include "synesthete/analysis/analysis.hpp"
#include "synesthete/image/image.hpp"

using namespace synesthete;

namespace {

std::vector<midi::Clip> make_clips(std::size_t count, int notes)
{
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> pitch(36, 96);
    std::uniform_int_distribution<int> velocity(30, 120);
    std::uniform_int_distribution<midi::Micros> onset(0, 9'999'999);
    std::uniform_int_distribution<midi::Micros> duration(50'000, 1'500'000);
    std::vector<midi::Clip> clips(count);
    for (auto& clip : clips) {
        clip.window_end = 10'000'000;
        for (int i = 0; i < notes; ++i) clip.notes.push_back({pitch(rng), velocity(rng), onset(rng), duration(rng)});
        midi::sort_notes(clip.notes);
    }
    return clips;
}

void BM_AnalyzeSerial(benchmark::State& state)
{
    const auto clips = make_clips(static_cast<std::size_t>(state.range(0)), 60);
    for (auto _ : state) benchmark::DoNotOptimize(analysis::analyze_batch_serial(clips));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_AnalyzeParallel(benchmark::State& state)
{
    const auto clips = make_clips(static_cast<std::size_t>(state.range(0)), 60);
    for (auto _ : state) benchmark::DoNotOptimize(analysis::analyze_batch(clips));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EncodeRoundTrip(benchmark::State& state)
{
    const auto clips = make_clips(64, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        for (const auto& clip : clips) {
            const auto enc = abc::encode_clip(clip, 96, abc::Meter{}, Key{4, Mode::minor});
            benchmark::DoNotOptimize(abc::score_to_notes(abc::parse_abc(enc.text)));
        }
    }
    state.SetItemsProcessed(state.iterations() * 64);
}

void BM_MockImage(benchmark::State& state)
{
    image::MockImageBackend backend;
    image::ImageRequest req;
    req.prompt = "A still lake beneath a full moon";
    req.size = {static_cast<int>(state.range(0)), static_cast<int>(state.range(0))};
    for (auto _ : state) {
        benchmark::DoNotOptimize(backend.render(req));
        ++req.seed;
    }
}

}  // namespace

BENCHMARK(BM_AnalyzeSerial)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AnalyzeParallel)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncodeRoundTrip)->Arg(20)->Arg(80)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MockImage)->Arg(256)->Arg(768)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
