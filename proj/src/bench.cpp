#include "prefiner/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "prefiner/attention.hpp"
#include "prefiner/error.hpp"
#include "prefiner/refiner.hpp"
#include "prefiner/rng.hpp"

namespace prefiner {

namespace {

void check_dims(const BenchDims& d) {
  if (d.n_f == 0 || d.t == 0 || d.c == 0 || d.heads == 0) fail(ErrorCode::InvalidArgument, "bench dimensions must be positive");
  if (d.c % d.heads != 0) fail(ErrorCode::InvalidArgument, "channels must be divisible by heads");
}

struct Fixture {
  AttentionParams spatial;
  AttentionParams temporal;
  Tensor grid;
  Tensor np;
  Tensor vp;
};

Fixture make_fixture(const BenchDims& d) {
  std::mt19937_64 rng = make_rng(0, "bench");
  const double sd = 1.0 / std::sqrt(static_cast<double>(d.c));
  Fixture f{AttentionParams::random(d.c, d.heads, rng, sd), AttentionParams::random(d.c, d.heads, rng, sd), {}, {}, {}};
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> g(d.n_f * d.t * d.c);
  for (double& x : g) x = n01(rng);
  f.grid = Tensor::from({d.n_f, d.t, d.c}, std::move(g));
  std::vector<double> a(d.c), b(d.c);
  for (double& x : a) x = n01(rng);
  for (double& x : b) x = n01(rng);
  f.np = Tensor::from({d.c}, std::move(a));
  f.vp = Tensor::from({d.c}, std::move(b));
  return f;
}

Tensor run(AttnLayout layout, const Fixture& f) {
  TapeScope off(nullptr);
  if (layout == AttnLayout::joint) {
    return joint_st_attention(f.spatial, f.grid, f.np, f.vp, LangRows::replicated, GuidedPath::literal);
  }
  Tensor s = spatial_refine_step(f.spatial, f.grid, f.np, LangRows::replicated, GuidedPath::literal);
  return temporal_refine_step(f.temporal, s, f.vp, LangRows::replicated, GuidedPath::literal);
}

double median_ms(AttnLayout layout, const Fixture& f, std::size_t repeats) {
  run(layout, f);  // warm-up
  std::vector<double> ms;
  for (std::size_t i = 0; i < repeats; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    Tensor out = run(layout, f);
    auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  return n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
}

}  // namespace

std::string_view to_string(AttnLayout layout) { return layout == AttnLayout::joint ? "joint" : "factorized"; }

std::uint64_t predicted_factorized_macs(std::size_t n_f, std::size_t t, std::size_t c) {
  return std::uint64_t{n_f} * t * (n_f + t) * c;
}

std::uint64_t predicted_joint_macs(std::size_t n_f, std::size_t t, std::size_t c) {
  const std::uint64_t n = std::uint64_t{n_f} * t;
  return n * n * c;
}

std::uint64_t expected_core_macs(AttnLayout layout, std::size_t n_f, std::size_t t, std::size_t c) {
  return 8 * (layout == AttnLayout::joint ? predicted_joint_macs(n_f, t, c) : predicted_factorized_macs(n_f, t, c));
}

MacReport count_macs(AttnLayout layout, const BenchDims& dims) {
  check_dims(dims);
  const Fixture f = make_fixture(dims);
  MacCount count;
  {
    MacCounterScope scope(count);
    run(layout, f);
  }
  return {count.core, count.projection};
}

ComplexityReport bench_wallclock(const BenchDims& dims, std::size_t repeats) {
  check_dims(dims);
  if (repeats < 5) fail(ErrorCode::InvalidArgument, "need at least 5 repeats, got " + std::to_string(repeats));
  ComplexityReport r;
  r.dims = dims;
  r.repeats = repeats;
  r.factorized_macs = count_macs(AttnLayout::factorized, dims).core;
  r.joint_macs = count_macs(AttnLayout::joint, dims).core;
  r.predicted_factorized = predicted_factorized_macs(dims.n_f, dims.t, dims.c);
  r.predicted_joint = predicted_joint_macs(dims.n_f, dims.t, dims.c);
  const Fixture f = make_fixture(dims);
  r.wall_factorized_ms = median_ms(AttnLayout::factorized, f, repeats);
  r.wall_joint_ms = median_ms(AttnLayout::joint, f, repeats);
  return r;
}

void write_report_tsv(std::ostream& out, const std::vector<ComplexityReport>& reports) {
  out << "variant\tn_f\tt\tc\theads\tcore_macs\tpredicted_macs\tmedian_ms\trepeats\n";
  char buf[64];
  for (const auto& r : reports) {
    for (AttnLayout layout : {AttnLayout::factorized, AttnLayout::joint}) {
      const bool joint = layout == AttnLayout::joint;
      std::snprintf(buf, sizeof buf, "%.4f", joint ? r.wall_joint_ms : r.wall_factorized_ms);
      out << to_string(layout) << '\t' << r.dims.n_f << '\t' << r.dims.t << '\t' << r.dims.c << '\t' << r.dims.heads
          << '\t' << (joint ? r.joint_macs : r.factorized_macs) << '\t'
          << (joint ? r.predicted_joint : r.predicted_factorized) << '\t' << buf << '\t' << r.repeats << '\n';
    }
  }
}

}  // namespace prefiner
