// Compares the OpenMP conv kernels against their serial references:
// throughput table plus a bit-equality check per shape.

#include <chrono>
#include <cstdio>
#include <omp.h>
#include <string>
#include <vector>

#include "synref/kernels.hpp"
#include "synref/rng.hpp"

using namespace synref;
namespace K = synref::kernels;

namespace {

struct Shape {
    const char* name;
    int n, h, w, ic, oc, k, s;
};

Tensor random_tensor(Rng& rng, int n, int h, int w, int c) {
    Tensor t(n, h, w, c);
    for (double& v : t.v) v = rng.uniform(-1.0, 1.0);
    return t;
}

double seconds(auto fn, int reps) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::stoi(argv[1]);

    const std::vector<Shape> shapes = {
        {"refiner-res  ", 4, 12, 16, 64, 64, 4, 1},
        {"refiner-full ", 1, 80, 160, 64, 64, 4, 1},
        {"disc-stem    ", 4, 80, 160, 3, 96, 5, 3},
        {"seg-enc      ", 4, 40, 80, 16, 32, 3, 2},
    };

    std::printf("threads=%d reps=%d\n", omp_get_max_threads(), reps);
    std::printf("%-14s %-9s %10s %10s %8s %9s\n", "shape", "pass", "serial_ms",
                "omp_ms", "speedup", "gflops");

    Rng rng(Rng::substream(99, "bench"));
    for (const auto& sp : shapes) {
        Tensor x = random_tensor(rng, sp.n, sp.h, sp.w, sp.ic);
        Tensor w = random_tensor(rng, sp.k, sp.k, sp.ic, sp.oc);
        std::vector<double> b(sp.oc, 0.1);

        Tensor y_ser = K::serial::conv2d_forward(x, w, b, sp.s, sp.s);
        Tensor y_omp = K::conv2d_forward(x, w, b, sp.s, sp.s);
        const bool fwd_equal = y_ser.v == y_omp.v;

        const double flops_fwd = 2.0 * y_ser.size() * sp.k * sp.k * sp.ic;
        const double ts = seconds(
            [&] { K::serial::conv2d_forward(x, w, b, sp.s, sp.s); }, reps);
        const double tp =
            seconds([&] { K::conv2d_forward(x, w, b, sp.s, sp.s); }, reps);
        std::printf("%-14s %-9s %10.2f %10.2f %8.2f %9.2f %s\n", sp.name,
                    "forward", ts * 1e3, tp * 1e3, ts / tp, flops_fwd / tp / 1e9,
                    fwd_equal ? "" : "MISMATCH");

        Tensor gy = random_tensor(rng, sp.n, y_ser.h, y_ser.w, sp.oc);
        Tensor gx_ser = K::serial::conv2d_backward_input(gy, w, sp.s, sp.s, sp.h, sp.w);
        Tensor gx_omp = K::conv2d_backward_input(gy, w, sp.s, sp.s, sp.h, sp.w);
        const bool bwd_equal = gx_ser.v == gx_omp.v;
        const double tsb = seconds(
            [&] { K::serial::conv2d_backward_input(gy, w, sp.s, sp.s, sp.h, sp.w); },
            reps);
        const double tpb = seconds(
            [&] { K::conv2d_backward_input(gy, w, sp.s, sp.s, sp.h, sp.w); }, reps);
        std::printf("%-14s %-9s %10.2f %10.2f %8.2f %9.2f %s\n", sp.name,
                    "bwd_in", tsb * 1e3, tpb * 1e3, tsb / tpb,
                    flops_fwd / tpb / 1e9, bwd_equal ? "" : "MISMATCH");

        Tensor gw_ser, gw_omp;
        std::vector<double> gb_ser, gb_omp;
        K::serial::conv2d_backward_weights(x, gy, sp.s, sp.s, sp.k, sp.k, gw_ser, gb_ser);
        K::conv2d_backward_weights(x, gy, sp.s, sp.s, sp.k, sp.k, gw_omp, gb_omp);
        const bool bww_equal = gw_ser.v == gw_omp.v && gb_ser == gb_omp;
        const double tsw = seconds(
            [&] {
                Tensor gw;
                std::vector<double> gb;
                K::serial::conv2d_backward_weights(x, gy, sp.s, sp.s, sp.k, sp.k, gw, gb);
            },
            reps);
        const double tpw = seconds(
            [&] {
                Tensor gw;
                std::vector<double> gb;
                K::conv2d_backward_weights(x, gy, sp.s, sp.s, sp.k, sp.k, gw, gb);
            },
            reps);
        std::printf("%-14s %-9s %10.2f %10.2f %8.2f %9.2f %s\n", sp.name,
                    "bwd_w", tsw * 1e3, tpw * 1e3, tsw / tpw,
                    flops_fwd / tpw / 1e9, bww_equal ? "" : "MISMATCH");
    }
    return 0;
}
