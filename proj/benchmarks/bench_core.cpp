#include <benchmark/benchmark.h>

#include "cbw/losses.hpp"
#include "cbw/networks.hpp"
#include "cbw/rng.hpp"
#include "cbw/synth.hpp"
#include "cbw/tensor.hpp"
#include "cbw/view_synthesis.hpp"

namespace {

cbw::Tensor random_tensor(std::vector<int> shape, cbw::Rng& rng, bool grad = false) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<double> data(n);
    for (double& v : data) v = rng.uniform(0.0, 1.0);
    return cbw::Tensor::from_data(std::move(shape), std::move(data), grad);
}

void bm_conv2d_forward(benchmark::State& state) {
    cbw::Rng rng(1);
    const cbw::Tensor in = random_tensor({1, 16, 32, 64}, rng);
    const cbw::Tensor w = random_tensor({16, 16, 3, 3}, rng);
    const cbw::Tensor b = random_tensor({16}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            cbw::conv2d(in, w, b, 1, {cbw::PadMode::Reflect, 1}).values().data());
    }
}
BENCHMARK(bm_conv2d_forward);

void bm_conv2d_backward(benchmark::State& state) {
    cbw::Rng rng(2);
    cbw::Tensor in = random_tensor({1, 16, 32, 64}, rng, true);
    cbw::Tensor w = random_tensor({16, 16, 3, 3}, rng, true);
    cbw::Tensor b = random_tensor({16}, rng, true);
    for (auto _ : state) {
        cbw::Tape tape;
        cbw::Tape::Scope scope(tape);
        cbw::Tensor loss =
            cbw::reduce_mean(cbw::conv2d(in, w, b, 1, {cbw::PadMode::Reflect, 1}));
        cbw::backward(loss);
        in.zero_grad();
        w.zero_grad();
        b.zero_grad();
    }
}
BENCHMARK(bm_conv2d_backward);

void bm_grid_sample(benchmark::State& state) {
    cbw::Rng rng(3);
    const cbw::Tensor map = random_tensor({1, 3, 64, 128}, rng);
    std::vector<double> coords;
    for (int i = 0; i < 64 * 128; ++i) {
        coords.push_back(rng.uniform(0.0, 127.0));
        coords.push_back(rng.uniform(0.0, 63.0));
    }
    const cbw::Tensor ct = cbw::Tensor::from_data({1, 64, 128, 2}, coords);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            cbw::grid_sample_bilinear(map, ct).values.values().data());
    }
}
BENCHMARK(bm_grid_sample);

void bm_depthnet_forward(benchmark::State& state) {
    cbw::Rng rng(4);
    auto [depth, camera] = cbw::init_params(cbw::NetworkConfig{}, 1);
    (void)camera;
    const cbw::Tensor img = random_tensor({3, 64, 128}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cbw::depthnet_forward(depth, img).depths[0].values().data());
    }
}
BENCHMARK(bm_depthnet_forward);

void bm_photometric_pair(benchmark::State& state) {
    cbw::Rng rng(5);
    const cbw::Tensor a = random_tensor({3, 64, 128}, rng);
    const cbw::Tensor b = random_tensor({3, 64, 128}, rng);
    const cbw::LossConstants c;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cbw::photometric_pair(a, b, c).values().data());
    }
}
BENCHMARK(bm_photometric_pair);

}  // namespace

BENCHMARK_MAIN();
