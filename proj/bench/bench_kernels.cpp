// Serial reference kernels against their OpenMP counterparts on the
// 992x992, 31x31 configuration used for the latency budget.
#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "cpdewarp/grid.hpp"
#include "cpdewarp/kernels.hpp"
#include "cpdewarp/parallel.hpp"
#include "cpdewarp/tps.hpp"

namespace {

constexpr int kSide = 992;

cpd::ReferenceSpec reference(int n) {
    cpd::ReferenceSpec r;
    r.rows = r.cols = n;
    r.origin = {0, 0};
    r.h_interval = r.v_interval = static_cast<double>(kSide - 1) / (n - 1);
    return r;
}

cpd::ControlGrid wavy(const cpd::ReferenceSpec& ref) {
    std::vector<cpd::Point2> pts;
    for (const cpd::ControlGrid base = cpd::build_reference_grid(ref); const auto& p : base.points()) {
        pts.push_back({p.x + 12 * std::sin(p.y / 90.0), p.y + 8 * std::cos(p.x / 120.0)});
    }
    return cpd::ControlGrid(ref.rows, ref.cols, std::move(pts));
}

cpd::ImageBuffer texture() {
    cpd::ImageBuffer img(kSide, kSide, 3);
    for (int i = 0; i < kSide; ++i)
        for (int j = 0; j < kSide; ++j)
            for (int k = 0; k < 3; ++k) img.pixel(i, j)[k] = static_cast<std::uint8_t>((i * 3 + j * 5 + k * 70) & 0xFF);
    return img;
}

template <bool Parallel>
void BM_MeshMap(benchmark::State& state) {
    const auto ref = reference(31);
    const auto ctl = wavy(ref);
    cpd::BackwardMap map(kSide, kSide);
    for (auto _ : state) {
        if constexpr (Parallel) cpd::kernels::omp::mesh_map(ref, ctl, map);
        else cpd::kernels::serial::mesh_map(ref, ctl, map);
        benchmark::DoNotOptimize(map.data().data());
    }
}

template <bool Parallel>
void BM_Tps(benchmark::State& state) {
    const auto ref = reference(static_cast<int>(state.range(0)));
    const auto ctl = wavy(ref);
    const auto sites = cpd::build_reference_grid(ref);
    const auto model = cpd::tps_fit(sites.points(), ctl.points());
    cpd::BackwardMap map(kSide, kSide);
    for (auto _ : state) {
        if constexpr (Parallel) cpd::kernels::omp::tps_evaluate(model, map);
        else cpd::kernels::serial::tps_evaluate(model, map);
        benchmark::DoNotOptimize(map.data().data());
    }
    state.counters["sites"] = static_cast<double>(sites.size());
}

template <bool Parallel>
void BM_Remap(benchmark::State& state) {
    const auto ref = reference(31);
    cpd::BackwardMap map(kSide, kSide);
    cpd::kernels::serial::mesh_map(ref, wavy(ref), map);
    const auto src = texture();
    cpd::ImageBuffer out(kSide, kSide, 3);
    for (auto _ : state) {
        if constexpr (Parallel) cpd::kernels::omp::remap(src, map, {255, 255, 255}, out);
        else cpd::kernels::serial::remap(src, map, {255, 255, 255}, out);
        benchmark::DoNotOptimize(out.data().data());
    }
}

}  // namespace

BENCHMARK(BM_MeshMap<false>)->Name("mesh_map/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MeshMap<true>)->Name("mesh_map/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Remap<false>)->Name("remap/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Remap<true>)->Name("remap/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Tps<false>)->Name("tps/serial")->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Tps<true>)->Name("tps/omp")->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
