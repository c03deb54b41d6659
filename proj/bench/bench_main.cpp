// Times the parallel kernels against the serial reference on the flagship
// shape (384 channels, 8 frames, 14x14 maps, 4 regions, 8 sets) and checks
// that both paths agree while doing so. Not part of the test suite; build
// the kpshift_bench target and run it directly.
//
//   kpshift_bench [threads] [repeats]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "kpshift/head.hpp"
#include "kpshift/rng.hpp"
#include "kpshift/threads.hpp"
#include "../src/ref/reference.hpp"

using namespace kpshift;
using Clock = std::chrono::steady_clock;

namespace {

Tensor random_tensor(std::initializer_list<std::size_t> dims, Rng& rng) {
    Tensor t = Tensor::zeros(dims);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <class F>
double time_ms(F&& body, int repeats) {
    body();  // warm-up, also materializes any lazy allocations
    const auto t0 = Clock::now();
    for (int r = 0; r < repeats; ++r) body();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

void report(const char* name, double serial_ms, double kernel_ms, double diff) {
    std::printf("%-18s serial %9.3f ms   kernels %9.3f ms   speedup %5.2fx   max|diff| %.3e\n",
                name, serial_ms, kernel_ms, serial_ms / kernel_ms, diff);
}

}  // namespace

int main(int argc, char** argv) {
    int threads = argc > 1 ? std::atoi(argv[1]) : 0;
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
    if (threads <= 0) {
#ifdef _OPENMP
        threads = 4;
#else
        threads = 1;
#endif
    }
    threads = apply_thread_count(threads);
    std::printf("threads=%d repeats=%d\n", threads, repeats);

    KpsemConfig cfg;
    cfg.k = 2;
    cfg.sets = 8;
    cfg.embed_dim = 24;

    Rng rng(1);
    const Tensor f = random_tensor({384, 8, 14, 14}, rng);
    const KpsemParams params = init_kpsem_params(384, cfg, 7);

    {
        Tensor a, b;
        const double s = time_ms([&] { a = ref::arese_forward(f, params.nets[0], cfg.arese()); },
                                 repeats);
        const double k = time_ms([&] { b = arese_forward(f, params.nets[0], cfg.arese()); },
                                 repeats);
        report("arese_forward", s, k, max_abs_diff(a, b));
    }
    {
        Tensor a, b;
        const double s = time_ms([&] { a = ref::kpsem_forward(f, params, cfg); }, repeats);
        const double k = time_ms([&] { b = kpsem_forward(f, params, cfg); }, repeats);
        report("kpsem_forward", s, k, max_abs_diff(a, b));
    }
    {
        // The conv stack dominates the head, so time it on its own too.
        Tensor e = random_tensor({384, 7, 24}, rng);
        Tensor a, b;
        const double s = time_ms(
            [&] {
                Tensor h = ref::conv_1x3_halve(e, params.conv1_w, params.conv1_b);
                a = ref::conv_1x3_halve(h, params.conv2_w, params.conv2_b);
            },
            repeats);
        const double k = time_ms(
            [&] {
                Tensor h = conv_1x3_halve(e, params.conv1_w, params.conv1_b);
                b = conv_1x3_halve(h, params.conv2_w, params.conv2_b);
            },
            repeats);
        report("conv_1x3 chain", s, k, max_abs_diff(a, b));
    }
    {
        Tensor x = random_tensor({2048, 48}, rng);
        Tensor w = random_tensor({96, 48}, rng);
        Tensor bias = random_tensor({96}, rng);
        Tensor a, b;
        const double s = time_ms([&] { a = ref::linear_forward(x, w, bias); }, repeats);
        const double k = time_ms([&] { b = linear_forward(x, w, bias); }, repeats);
        report("linear_forward", s, k, max_abs_diff(a, b));
    }
    {
        Tensor big = random_tensor({384, 8, 196}, rng);
        Tensor a, b;
        const double s = time_ms([&] { a = ref::softmax_axis(big, 2); }, repeats);
        const double k = time_ms([&] { b = softmax_axis(big, 2); }, repeats);
        report("softmax_axis", s, k, max_abs_diff(a, b));
    }
    return 0;
}
