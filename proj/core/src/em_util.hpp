#pragma once

// Internal helpers shared by the EM engines.

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "lmpanel/fit.hpp"

namespace lmpanel::detail {

// Row-normalize expected counts; empty rows become uniform and are flagged.
inline void normalize_rows(Eigen::MatrixXd& m, Diagnostics& diag, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double s = m.row(i).sum();
    if (s <= 0.0) {
      m.row(i).setConstant(1.0 / m.cols());
      ++diag.zero_count_resets;
      diag.warn(std::string(what) + ": empty expected-count row reset to uniform");
    } else {
      m.row(i) /= s;
    }
  }
}

inline void normalize_cols(Eigen::MatrixXd& m, Diagnostics& diag, const char* what) {
  for (Eigen::Index u = 0; u < m.cols(); ++u) {
    double s = m.col(u).sum();
    if (s <= 0.0) {
      m.col(u).setConstant(1.0 / m.rows());
      ++diag.zero_count_resets;
      diag.warn(std::string(what) + ": empty expected-count column reset to uniform");
    } else {
      m.col(u) /= s;
    }
  }
}

// Deterministic chunked reduction: the item range is cut into fixed chunks
// (independent of the thread count), each chunk accumulates into its own
// Accum, and chunks are merged in index order. Results are bit-identical for
// any `threads` value. Accum needs merge(const Accum&).
template <class Accum, class ChunkFn>
Accum chunked_reduce(int n, int threads, Accum zero, ChunkFn fn) {
  if (n <= 0) return zero;
  const int chunk = std::max(1, (n + 63) / 64);
  const int n_chunks = (n + chunk - 1) / chunk;
  if (threads <= 1 || n_chunks == 1) {
    Accum acc = zero;
    fn(0, n, acc);
    return acc;
  }
  std::vector<Accum> parts(n_chunks, zero);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int c = next.fetch_add(1);
      if (c >= n_chunks) break;
      int b = c * chunk, e = std::min(n, b + chunk);
      fn(b, e, parts[c]);
    }
  };
  std::vector<std::thread> pool;
  int nt = std::min(threads, n_chunks);
  pool.reserve(nt);
  for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  Accum acc = std::move(parts[0]);
  for (int c = 1; c < n_chunks; ++c) acc.merge(parts[c]);
  return acc;
}

// Runs fn(i) for i in 0..n-1, possibly on several threads; results are
// returned in index order.
template <class T, class Fn>
std::vector<T> parallel_indexed(int n, int threads, Fn fn) {
  std::vector<T> out(n);
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) break;
      out[i] = fn(i);
    }
  };
  std::vector<std::thread> pool;
  int nt = std::min(threads, n);
  for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

// Log-likelihood trace bookkeeping with the relative-increment stopping rule
// (ll_s - ll_{s-1}) / |ll_s| < tol. Dips beyond float noise are recorded as
// monotonicity violations.
struct EmTrace {
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;

  void start(double ll) { trace.assign(1, ll); }

  // Returns true when the stopping rule fires.
  bool step(double ll, double tol, Diagnostics& diag) {
    double prev = trace.back();
    trace.push_back(ll);
    ++iterations;
    double denom = std::abs(ll);
    if (denom == 0.0) denom = 1.0;
    double rel = (ll - prev) / denom;
    if (rel < -1e-10) diag.monotonicity_violations.emplace_back(iterations, rel);
    if (rel < tol) {
      converged = true;
      return true;
    }
    return false;
  }
};

}  // namespace lmpanel::detail
