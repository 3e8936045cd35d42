#include "dkm/cluster.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "dkm/error.hpp"
#include "dkm/kernels.hpp"

namespace dkm {
namespace {

// Columns of an s x N matrix as N contiguous s-vectors.
std::vector<double> column_major(const Matrix& w) {
  const Matrix t = w.transpose();
  return {t.data().begin(), t.data().end()};
}

double sum_fixed_order(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

// Mean of each cluster; empty clusters keep their previous center unless `repair`
// is set, in which case they jump to the farthest not-yet-used point.
void update_centers(const std::vector<double>& pts, std::size_t n, std::size_t d,
                    const std::vector<std::uint32_t>& labels, std::vector<double> dist2,
                    std::vector<double>& centers, std::size_t k, bool repair) {
  std::vector<double> sums(k * d, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = labels[i];
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += pts[i * d + j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) {
      for (std::size_t j = 0; j < d; ++j)
        centers[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
    } else if (repair) {
      const auto far = std::max_element(dist2.begin(), dist2.end()) - dist2.begin();
      for (std::size_t j = 0; j < d; ++j) centers[c * d + j] = pts[far * d + j];
      dist2[far] = -1.0;
    }
  }
}

Matrix centers_to_matrix(const std::vector<double>& centers, std::size_t k, std::size_t d) {
  Matrix out(d, k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) out(j, c) = centers[c * d + j];
  return out;
}

}  // namespace

LloydRun lloyd(const Matrix& w, Matrix initial_centers, std::size_t max_iter, double tol) {
  const std::size_t d = w.rows(), n = w.cols(), k = initial_centers.cols();
  require(initial_centers.rows() == d, "lloyd: center dimension does not match data");
  require(k >= 1 && k <= n, "lloyd: need 1 <= k <= N");
  const auto pts = column_major(w);
  std::vector<double> centers = column_major(initial_centers);
  std::vector<std::uint32_t> labels(n), prev_labels;
  std::vector<double> dist2(n);

  LloydRun run;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iter, 1); ++it) {
    kernels::parallel::nearest_center(pts, centers, n, d, k, labels, dist2);
    const double inertia = sum_fixed_order(dist2);
    assert(inertia <= prev * (1.0 + 1e-12) + 1e-300 && "Lloyd inertia increased");
    run.inertia_trace.push_back(inertia);
    run.iterations = it + 1;
    const bool stable = labels == prev_labels;
    const bool small_gain = std::isfinite(prev) && (prev - inertia) <= tol * prev;
    if (inertia == 0.0 || stable || small_gain) break;
    prev = inertia;
    prev_labels = labels;
    update_centers(pts, n, d, labels, dist2, centers, k, /*repair=*/true);
  }
  // Final centers are the means of the final assignment.
  update_centers(pts, n, d, labels, dist2, centers, k, /*repair=*/false);

  run.codebook.centers = centers_to_matrix(centers, k, d);
  run.codebook.assignments = std::move(labels);
  run.codebook.inertia = within_cluster_ss(w, run.codebook);
  if (run.codebook.inertia < run.inertia_trace.back())
    run.inertia_trace.push_back(run.codebook.inertia);
  return run;
}

Codebook hartigan_refine(const Matrix& w, Codebook cb) {
  const std::size_t d = w.rows(), n = w.cols(), k = cb.k();
  require(cb.assignments.size() == n, "hartigan_refine: assignment count does not match N");
  const auto pts = column_major(w);
  std::vector<double> centers(k * d, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = cb.assignments[i];
    require(c < k, "hartigan_refine: assignment out of range");
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) centers[c * d + j] += pts[i * d + j];
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j)
      if (counts[c] > 0) centers[c * d + j] /= static_cast<double>(counts[c]);

  auto dist2 = [&](std::size_t i, std::size_t c) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = pts[i * d + j] - centers[c * d + j];
      acc += diff * diff;
    }
    return acc;
  };
  const double scale = std::max(within_cluster_ss(w, cb), 1e-300);
  const std::size_t max_passes = 100;
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = cb.assignments[i];
      if (counts[a] < 2) continue;
      const double na = static_cast<double>(counts[a]);
      const double leave = na / (na - 1.0) * dist2(i, a);
      double best_gain = 1e-12 * scale;
      std::size_t best = a;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == a) continue;
        const double nb = static_cast<double>(counts[b]);
        const double gain = leave - nb / (nb + 1.0) * dist2(i, b);
        if (gain > best_gain) {
          best_gain = gain;
          best = b;
        }
      }
      if (best == a) continue;
      const double nb = static_cast<double>(counts[best]);
      for (std::size_t j = 0; j < d; ++j) {
        const double x = pts[i * d + j];
        centers[a * d + j] = (centers[a * d + j] * na - x) / (na - 1.0);
        centers[best * d + j] = (centers[best * d + j] * nb + x) / (nb + 1.0);
      }
      --counts[a];
      ++counts[best];
      cb.assignments[i] = static_cast<std::uint32_t>(best);
      moved = true;
    }
    if (!moved) break;
  }
  // Recompute means from scratch so incremental drift does not leak out.
  std::vector<double> none(n, 0.0);
  update_centers(pts, n, d, cb.assignments, none, centers, k, /*repair=*/false);
  cb.centers = centers_to_matrix(centers, k, d);
  cb.inertia = within_cluster_ss(w, cb);
  return cb;
}

Matrix kmeans_pp_seed(const Matrix& w, std::size_t k, std::uint64_t seed) {
  const std::size_t d = w.rows(), n = w.cols();
  require(k >= 1 && k <= n, "kmeans_pp_seed: need 1 <= k <= N");
  const auto pts = column_major(w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> centers;
  centers.reserve(k * d);
  const std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  centers.insert(centers.end(), pts.begin() + first * d, pts.begin() + (first + 1) * d);

  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    const double* last = centers.data() + (c - 1) * d;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = pts[i * d + j] - last[j];
        acc += diff * diff;
      }
      best[i] = std::min(best[i], acc);
      total += best[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double run = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        run += best[i];
        if (run > target && best[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    centers.insert(centers.end(), pts.begin() + pick * d, pts.begin() + (pick + 1) * d);
  }
  return centers_to_matrix(centers, k, d);
}

Codebook kmeans(const Matrix& w, std::size_t k, const KMeansOptions& opts) {
  const std::size_t n = w.cols();
  require(k >= 1, "kmeans: k must be >= 1");
  require(k <= n, "kmeans: k = " + std::to_string(k) + " exceeds N = " + std::to_string(n));

  if (k == n) {
    Codebook cb{w, std::vector<std::uint32_t>(n), 0.0};
    std::iota(cb.assignments.begin(), cb.assignments.end(), 0u);
    return cb;
  }

  Codebook best;
  best.inertia = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(opts.restarts, 1);
  for (std::size_t r = 0; r < restarts; ++r) {
    const std::uint64_t seed = opts.seed + 0x9E3779B97F4A7C15ull * r;
    auto run = lloyd(w, kmeans_pp_seed(w, k, seed), opts.max_iter, opts.tol);
    auto refined = hartigan_refine(w, std::move(run.codebook));
    if (refined.inertia < best.inertia) best = std::move(refined);
  }
  return best;
}

std::size_t zero_cluster_size(std::size_t n, double p) {
  require(p >= 0.0 && p < 1.0, "zero cluster fraction p must lie in [0, 1)");
  // The shrink keeps products like 0.3 * 10 from rounding up to 4.
  return static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) * (1.0 - 1e-12)));
}

std::vector<std::size_t> smallest_norm_columns(const Matrix& w, std::size_t count) {
  const std::size_t n = w.cols();
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) norms[j] += w(i, j) * w(i, j);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
  order.resize(std::min(count, n));
  return order;
}

Codebook kmeans_with_zero_cluster(const Matrix& w, std::size_t k, double p,
                                  const KMeansOptions& opts) {
  const std::size_t n = w.cols(), d = w.rows();
  const std::size_t zeros = zero_cluster_size(n, p);
  if (zeros == 0) return kmeans(w, k, opts);
  require(zeros < n, "kmeans_with_zero_cluster: ceil(pN) must be < N");
  require(k >= 2, "kmeans_with_zero_cluster: k must be >= 2 when p > 0");
  require(k - 1 <= n - zeros, "kmeans_with_zero_cluster: k - 1 exceeds the remaining columns");

  const auto pinned = smallest_norm_columns(w, zeros);
  std::vector<bool> is_zero(n, false);
  for (auto j : pinned) is_zero[j] = true;

  std::vector<std::size_t> rest;
  rest.reserve(n - zeros);
  for (std::size_t j = 0; j < n; ++j)
    if (!is_zero[j]) rest.push_back(j);
  Matrix sub(d, rest.size());
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < rest.size(); ++j) sub(i, j) = w(i, rest[j]);

  const Codebook inner = kmeans(sub, k - 1, opts);

  Codebook cb{Matrix(d, k), std::vector<std::uint32_t>(n, 0), 0.0};
  for (std::size_t c = 0; c + 1 < k; ++c)
    for (std::size_t i = 0; i < d; ++i) cb.centers(i, c + 1) = inner.centers(i, c);
  for (std::size_t j = 0; j < rest.size(); ++j) cb.assignments[rest[j]] = inner.assignments[j] + 1;
  cb.inertia = within_cluster_ss(w, cb);
  return cb;
}

Matrix quantize(const Matrix& w, const Codebook& cb) {
  require(cb.dim() == w.rows() && cb.assignments.size() == w.cols(),
          "quantize: codebook does not match matrix shape");
  Matrix out(w.rows(), w.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    const auto a = cb.assignments[j];
    require(a < cb.k(), "quantize: assignment index " + std::to_string(a) + " out of range");
    for (std::size_t i = 0; i < w.rows(); ++i) out(i, j) = cb.centers(i, a);
  }
  return out;
}

double within_cluster_ss(const Matrix& w, const Codebook& cb) {
  require(cb.dim() == w.rows() && cb.assignments.size() == w.cols(),
          "within_cluster_ss: codebook does not match matrix shape");
  double acc = 0.0;
  for (std::size_t j = 0; j < w.cols(); ++j) {
    const auto a = cb.assignments[j];
    require(a < cb.k(), "within_cluster_ss: assignment index out of range");
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const double diff = w(i, j) - cb.centers(i, a);
      acc += diff * diff;
    }
  }
  return acc;
}

}  // namespace dkm
