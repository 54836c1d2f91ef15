#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "prefiner/error.hpp"
#include "prefiner/kernels.hpp"
#include "prefiner/parallel.hpp"

namespace prefiner::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  const char* env = std::getenv("PREFINER_ISA");
  std::string want = env != nullptr ? env : "";
  if (want == "scalar") return &scalar_kernels();
  if (isa_supported(Isa::avx2)) return avx2_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

void transpose_into(std::size_t rows, std::size_t cols, const double* src, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

}  // namespace

std::string_view to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
  return avx2_kernels() != nullptr && cpu_has_avx2();
}

Isa active_isa() { return current().load()->isa; }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) fail(ErrorCode::InvalidArgument, "kernel variant not available: " + std::string(to_string(isa)));
  current().store(isa == Isa::avx2 ? avx2_kernels() : &scalar_kernels());
}

const KernelTable& active() { return *current().load(); }

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  const KernelTable& t = active();
  parallel_for(m, 4, n * k, [&](std::size_t lo, std::size_t hi) {
    t.gemm_nn(hi - lo, n, k, a + lo * k, b, c + lo * n, accumulate);
  });
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  thread_local std::vector<double> bt;
  transpose_into(n, k, b, bt);
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  thread_local std::vector<double> at;
  transpose_into(k, m, a, at);
  gemm_nn(m, n, k, at.data(), b, c, accumulate);
}

void softmax_rows(std::size_t rows, std::size_t cols, const double* in, double* out) {
  const KernelTable& t = active();
  parallel_for(rows, 1, cols * 8, [&](std::size_t lo, std::size_t hi) {
    t.softmax_rows(hi - lo, cols, in + lo * cols, out + lo * cols);
  });
}

}  // namespace prefiner::kernels
