// Compares the OpenMP kernels against their serial references and times one
// contrastive training step at desk and published dimensions.
#include <chrono>
#include <cstdio>
#include <random>

#include "cmcss/cohort.hpp"
#include "cmcss/encoder.hpp"
#include "cmcss/kernels.hpp"
#include "cmcss/training.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace cmcss;
using clock_type = std::chrono::steady_clock;

namespace {

template <class F>
double time_ms(F&& f, int reps) {
    const auto t0 = clock_type::now();
    for (int r = 0; r < reps; ++r) f();
    return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count() / reps;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Matrix m(r, c);
    for (double& v : m.values()) v = n(rng);
    return m;
}

void bench_matmul(std::size_t n) {
    std::mt19937_64 rng(1);
    const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
    Matrix c1, c2;
    const double par = time_ms([&] { c1 = kernels::matmul(a, b); }, 5);
    const double ser = time_ms([&] { c2 = kernels::serial::matmul(a, b); }, 5);
    std::printf("matmul %4zu  parallel %8.3f ms  serial %8.3f ms  identical=%s\n", n, par, ser,
                c1 == c2 ? "yes" : "no");
}

void bench_step(const char* label, CohortDims dims) {
    CohortConfig cc;
    cc.n_subjects = 32;
    cc.dims = dims;
    cc.seed = 3;
    const Cohort cohort = generate_synthetic_cohort(cc);
    ModelShape shape;
    shape.dims = dims;
    const EncoderParams params = init_params(shape, 1);
    std::vector<std::size_t> batch(cohort.size());
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
    const double fwd = time_ms([&] { (void)encode_batch(cohort, batch, params); }, 3);
    const double step = time_ms([&] { (void)compute_gradients(params, cohort, batch, Objective::joint(1.0)); }, 3);
    std::printf("%-10s params=%zu  forward(32)=%8.2f ms  forward+backward(32)=%8.2f ms\n", label,
                params.parameter_count(), fwd, step);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#endif
    for (std::size_t n : {32, 87, 128, 256}) bench_matmul(n);
    CohortDims desk;
    desk.d = 16;
    desk.z = 20;
    desk.h = 16;
    desk.w = 16;
    bench_step("desk", desk);
    bench_step("published", CohortDims{});
    return 0;
}
