// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance            run every criterion
//   acceptance 1 4 8      run a subset
//
// Criteria 5 and 6 train LeNet on data/mnist-10k (8000 train / 2000 test images)
// and take several minutes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dkm/cluster.hpp"
#include "dkm/compress.hpp"
#include "dkm/dataio.hpp"
#include "dkm/energy.hpp"
#include "dkm/linalg.hpp"
#include "dkm/pipeline.hpp"
#include "dkm/reshape.hpp"
#include "dkm/spectral_reg.hpp"

using namespace dkm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.data()) v = g(rng);
  return m;
}

Matrix orthonormal(std::size_t n, std::size_t r, std::mt19937_64& rng) {
  Matrix q = gaussian(n, r, rng);
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t p = 0; p < j; ++p) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += q(i, j) * q(i, p);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, p);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= std::sqrt(norm);
  }
  return q;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// 1. reg_gradient against central differences of (lambda/2) * penalty.
Outcome regularizer_gradient() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    // update_f never yields more than rank(W) <= s columns, so F is always narrower than N.
    const std::size_t s = pick(rng, 1, 5), n = pick(rng, s + 1, 64), r = pick(rng, 1, s);
    Matrix w = gaussian(s, n, rng);
    const OrthonormalFactor f(orthonormal(n, r, rng));
    const double lambda = std::exp(std::uniform_real_distribution<double>(std::log(1e-6), std::log(1e-1))(rng));
    const Matrix g = reg_gradient(w, f, lambda);
    const double h = 1e-5;
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + h;
      const double up = 0.5 * lambda * penalty(w, f);
      w.data()[i] = saved - h;
      const double down = 0.5 * lambda * penalty(w, f);
      w.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      diff += (fd - g.data()[i]) * (fd - g.data()[i]);
      norm += g.data()[i] * g.data()[i];
    }
    const double rel = std::sqrt(diff / norm);
    worst = std::max(worst, rel);
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 1.0,
          fmt("worst relative error %.2e over 50 (W, F) pairs (limit 1e-6); %.3f s (limit 1 s)", worst, secs)};
}

// 2. Ky Fan: update_f attains the tail energy and beats random orthonormal F.
Outcome ky_fan() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  double worst_gap = 0.0;
  std::size_t beaten = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t s = pick(rng, 1, 5), n = pick(rng, s + 1, 64), k = pick(rng, 1, s);
    const Matrix w = gaussian(s, n, rng);
    const auto f = update_f(w, k);
    const auto svd = truncated_svd(w, s);
    double tail = 0.0;
    for (std::size_t i = k; i < svd.singular_values.size(); ++i) tail += svd.singular_values[i] * svd.singular_values[i];
    const double best = penalty(w, f);
    worst_gap = std::max(worst_gap, std::abs(best - tail));
    for (int j = 0; j < 100; ++j)
      if (penalty(w, OrthonormalFactor(orthonormal(n, f.width(), rng))) < best - 1e-12) ++beaten;
  }
  const double secs = seconds_since(t0);
  return {worst_gap <= 1e-8 && beaten == 0 && secs < 5.0,
          fmt("max |penalty - tail sigma^2| %.2e (limit 1e-8); random F beating update_f: %zu of 5000; %.3f s "
              "(limit 5 s)",
              worst_gap, beaten, secs)};
}

// 3. Penalty at the normalised indicator equals the within-cluster sum of squares.
Outcome indicator_identity() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t s = pick(rng, 1, 5), n = pick(rng, 4, 64), k = pick(rng, 2, std::min<std::size_t>(n, 8));
    const Matrix w = gaussian(s, n, rng);
    const auto cb = kmeans(w, k, {.seed = static_cast<std::uint64_t>(t)});
    std::vector<double> counts(k, 0.0);
    for (auto a : cb.assignments) counts[a] += 1.0;
    Matrix f(n, k);
    for (std::size_t j = 0; j < n; ++j) f(j, cb.assignments[j]) = 1.0 / std::sqrt(counts[cb.assignments[j]]);
    worst = std::max(worst, std::abs(penalty(w, OrthonormalFactor(f)) - within_cluster_ss(w, cb)));
  }
  return {worst <= 1e-8, fmt("max |penalty - WCSS| %.2e over 20 instances (limit 1e-8)", worst)};
}

double brute_force_optimum(const Matrix& w, std::size_t k) {
  const std::size_t n = w.cols(), s = w.rows();
  std::vector<std::uint32_t> a(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<std::size_t> counts(k, 0);
    for (auto c : a) ++counts[c];
    if (std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; })) {
      Matrix centers(s, k);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < s; ++i) centers(i, a[j]) += w(i, j) / static_cast<double>(counts[a[j]]);
      best = std::min(best, within_cluster_ss(w, Codebook{centers, a, 0.0}));
    }
    std::size_t pos = 0;
    while (pos < n && ++a[pos] == k) a[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

// 4. Best-of-10 k-means against exhaustive search on tiny instances.
Outcome kmeans_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(404);
  double worst = 0.0;
  std::size_t instances = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t s = pick(rng, 1, 2), n = pick(rng, 1, 8), k = pick(rng, 1, std::min<std::size_t>(3, n));
    const Matrix w = gaussian(s, n, rng);
    const double got = kmeans(w, k, {.seed = static_cast<std::uint64_t>(t), .restarts = 10}).inertia;
    const double opt = brute_force_optimum(w, k);
    worst = std::max(worst, std::abs(got - opt));
    ++instances;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 10.0,
          fmt("max |best-of-10 - global optimum| %.2e over %zu instances (limit 1e-9); %.3f s (limit 10 s)", worst,
              instances, secs)};
}

struct MnistRun {
  PipelineReport report;
  double seconds = 0.0;
  std::string error;
};

const MnistRun& mnist_run() {
  static std::optional<MnistRun> run;
  if (run) return *run;
  run.emplace();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto train_set = load_mnist(DKM_MNIST_DIR, "train");
    const auto test_set = load_mnist(DKM_MNIST_DIR, "t10k");
    const auto arch = lenet5();
    PipelineConfig cfg;  // 60 baseline epochs, 30 retraining epochs, lambda 1e-4, refresh every 5
    for (double target : {4.0, 8.0, 16.0}) {
      ShareConfig share;
      share.per_layer_k = ks_for_layer_cr(arch, target, share.weight_bits);
      cfg.points.push_back({fmt("cr%g", target), share});
    }
    run->report = run_pipeline(train_set, test_set, arch, cfg, [](const std::string& line) {
      if (line.rfind("train: epoch", 0) != 0 && line.rfind("retrain: epoch", 0) != 0)
        std::printf("    %s\n", line.c_str());
      std::fflush(stdout);
    });
    std::printf("%s", format_pipeline_report(run->report).c_str());
  } catch (const std::exception& e) {
    run->error = e.what();
  }
  run->seconds = seconds_since(t0);
  return *run;
}

// 5. Deep k-Means >= sharing without retraining at layer-wise CR 4, 8, 16; CR 4 loss within 1%.
Outcome pipeline_monotonicity() {
  const auto& run = mnist_run();
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  const auto& r = run.report;
  bool ok = run.seconds <= 1800.0;
  std::string detail = fmt("baseline %.4f;", r.baseline_acc);
  for (const auto& p : r.points) {
    const bool ge = p.dkm_acc >= p.wr_acc;
    ok &= ge;
    detail += fmt(" %s (CR %.2f): dkm %.4f %s wr %.4f;", p.label.c_str(), p.cr, p.dkm_acc, ge ? ">=" : "<", p.wr_acc);
  }
  const double delta = r.points.front().dkm_acc - r.baseline_acc;
  ok &= std::abs(delta) <= 0.01;
  detail += fmt(" CR4 delta %+.4f (limit +-0.01); %.0f s (limit 1800 s)", delta, run.seconds);
  return {ok, detail};
}

// 6. Regularised retraining leaves every conv layer more clustered than the baseline.
Outcome clustering_effect() {
  const auto& run = mnist_run();
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  bool ok = true;
  std::string detail;
  for (const auto& p : run.report.points) {
    detail += p.label + ":";
    for (std::size_t i = 0; i < p.ks.size(); ++i) {
      const bool lower = p.dkm_inertia[i] < p.wr_inertia[i];
      ok &= lower;
      detail += fmt(" conv%zu K=%zu %.4g %s %.4g", i + 1, p.ks[i], p.dkm_inertia[i], lower ? "<" : ">=", p.wr_inertia[i]);
    }
    detail += "; ";
  }
  detail += "(retrained vs baseline inertia)";
  return {ok, detail};
}

// 7. Zero cluster: stored center exactly zero, at least ceil(pN) zero columns after reconstruction.
Outcome sparsity_promotion() {
  auto model = init_model(lenet5(), 707);
  round_to_float32(model);
  const std::vector<double> ps{0.3, 0.55};
  ShareConfig cfg;
  cfg.cluster_rate = 0.1;
  cfg.sparsity_p = ps;
  const auto cm = decode_compressed(encode_compressed(share(model, cfg)));
  const auto rec = reconstruct(cm);
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < cm.layers.size(); ++i) {
    const auto& l = cm.layers[i];
    bool zero_center = true;
    for (std::size_t r = 0; r < l.codebook.dim(); ++r) zero_center &= l.codebook.centers(r, 0) == 0.0;
    const auto w = reshape_rows(rec.conv_tensor(l.layer_index));
    std::size_t zeros = 0;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      bool z = true;
      for (std::size_t r = 0; r < w.rows(); ++r) z &= w(r, j) == 0.0;
      zeros += z;
    }
    const std::size_t need = zero_cluster_size(w.cols(), ps[i]);
    ok &= zero_center && zeros >= need;
    detail += fmt("conv%zu p=%.2f: center0 %s, %zu zero columns (need %zu); ", i + 1, ps[i],
                  zero_center ? "zero" : "NONZERO", zeros, need);
  }
  detail += "(after a DKMC round trip)";
  return {ok, detail};
}

// 8. Full-adder values and the sharing/pruning trichotomy on LeNet.
Outcome energy_metrics() {
  const bool fa = dot_product_fa(1, 1, 1) == 1 && dot_product_fa(2, 8, 8) == 144 &&
                  dot_product_fa(1152, 16, 16) == 343254;
  NetworkSpec base = netspec_from_arch(lenet5());
  std::erase_if(base.layers, [](const EnergyLayer& l) { return l.kind != EnergyLayerKind::Conv; });
  const auto b = total_energy(base);
  bool tri = true;
  // Sharing at CR = N/K for K = N/2 and N/5 (both divide N for LeNet's conv layers).
  for (std::size_t factor : {2u, 5u}) {
    auto spec = base;
    for (auto& l : spec.layers) l.shared_k = l.s * l.c * l.m / factor;
    const auto r = total_energy(spec);
    tri &= r.weight_rep_cost * factor == b.weight_rep_cost;
    tri &= r.act_rep_cost == b.act_rep_cost;
    tri &= r.comp_cost_fa == b.comp_cost_fa;
  }
  // Filter pruning by half: CR = 2.
  auto pruned = base;
  for (auto& l : pruned.layers) l.pruned = 0.5;
  const auto p = total_energy(pruned);
  tri &= 2 * p.weight_rep_cost == b.weight_rep_cost;
  tri &= 2 * p.act_rep_cost == b.act_rep_cost;
  return {fa && tri, fmt("FA values (1, 144, 343254) %s; trichotomy on LeNet conv layers %s", fa ? "exact" : "WRONG",
                         tri ? "exact" : "VIOLATED")};
}

// 9. R^2 of an exact line; energy totals across cluster rates follow weight_rep.
Outcome r_squared_and_rates() {
  std::vector<double> xs, ys;
  for (int i = 0; i < 12; ++i) {
    xs.push_back(0.37 * i - 1.1);
    ys.push_back(2.5 * xs.back() - 4.0);
  }
  const double r2 = r_squared(xs, ys);
  bool ok = std::abs(r2 - 1.0) <= 1e-12;

  auto model = init_model(lenet5(), 909);
  round_to_float32(model);
  std::vector<std::pair<std::uint64_t, double>> pts;
  std::string detail = fmt("R^2 of exact line %.15f;", r2);
  for (double rate : {0.5, 0.25, 0.1, 0.05}) {
    ShareConfig cfg;
    cfg.cluster_rate = rate;
    const auto e = total_energy(netspec_from_compressed(share(model, cfg)));
    pts.emplace_back(e.weight_rep_cost, e.total_energy_mac);
    detail += fmt(" rate %.2f: weight_rep %llu total %.1f;", rate, static_cast<unsigned long long>(e.weight_rep_cost),
                  e.total_energy_mac);
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    ok &= pts[i].first <= pts[i - 1].first;
    ok &= pts[i].second <= pts[i - 1].second;
  }
  return {ok, detail};
}

// 10. Bit-exact file round trips and the derived CR example.
Outcome formats() {
  auto model = init_model(lenet5(), 1010);
  round_to_float32(model);
  const auto mbytes = encode_model(model);
  const auto mback = decode_model(mbytes);
  const bool dkmm = mback == model && encode_model(mback) == mbytes;

  ShareConfig cfg;
  cfg.cluster_rate = 0.1;
  cfg.sparsity_p = {0.2, 0.1};
  const auto cm = share(model, cfg);
  const auto cbytes = encode_compressed(cm);
  const auto cback = decode_compressed(cbytes);
  const bool dkmc = encode_compressed(cback) == cbytes && reconstruct(cback) == reconstruct(cm);

  const LayerFootprint fp{5, 480, 48};
  const double cr = compression_ratio(std::span(&fp, 1), 32);
  const bool cr_ok = std::abs(cr - 7.27) <= 1e-2;
  return {dkmm && dkmc && cr_ok, fmt("DKMM round trip %s; DKMC round trip %s; CR(s=5, N=480, K=48) = %.4f",
                                     dkmm ? "bit-exact" : "MISMATCH", dkmc ? "bit-exact" : "MISMATCH", cr)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"regularizer gradient vs central differences", regularizer_gradient},
      {"Ky Fan closed form for F", ky_fan},
      {"penalty at cluster indicator equals WCSS", indicator_identity},
      {"k-means vs brute-force optimum", kmeans_oracle},
      {"Deep k-Means vs sharing without retraining on MNIST", pipeline_monotonicity},
      {"retraining lowers per-layer k-means inertia", clustering_effect},
      {"zero-cluster sparsity promotion", sparsity_promotion},
      {"energy metrics and sharing/pruning trichotomy", energy_metrics},
      {"R^2 and energy across cluster rates", r_squared_and_rates},
      {"DKMM/DKMC round trips and CR arithmetic", formats},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %s: %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
