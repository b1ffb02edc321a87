#pragma once

// Execution strategies, worker teams and run instrumentation. Every thread
// in the library is created here.

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "patchy/errors.hpp"

namespace patchy {

enum class StrategyKind { serial, method1, method2 };

/// serial: one thread. method1: patches one after the other, node batches of
/// each sweep split across workers. method2: one patch per worker, each
/// patch solved serially.
struct ExecutionStrategy {
  StrategyKind kind = StrategyKind::serial;
  int workers = 1;

  static ExecutionStrategy serial() { return {}; }
  static ExecutionStrategy method1(int w) { return {StrategyKind::method1, w}; }
  static ExecutionStrategy method2(int w) { return {StrategyKind::method2, w}; }

  /// Workers sharing the node batches of one sweep.
  int sweep_workers() const noexcept { return kind == StrategyKind::method1 ? std::max(1, workers) : 1; }
  /// Workers taking whole tasks (patches, subdomains, colors).
  int task_workers() const noexcept { return kind == StrategyKind::serial ? 1 : std::max(1, workers); }
};

inline std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::serial: return "serial";
    case StrategyKind::method1: return "m1";
    case StrategyKind::method2: return "m2";
  }
  return "serial";
}

inline StrategyKind parse_strategy(const std::string& s) {
  if (s == "serial") return StrategyKind::serial;
  if (s == "m1" || s == "method1") return StrategyKind::method1;
  if (s == "m2" || s == "method2") return StrategyKind::method2;
  throw ConfigError("unknown strategy '" + s + "' (expected serial, m1 or m2)");
}

/// Exact work counters. Each worker keeps its own and they are summed after
/// the join, so serial and parallel totals are both deterministic sums.
struct WorkCounters {
  std::uint64_t relaxations = 0;
  std::uint64_t candidate_evals = 0;

  WorkCounters& operator+=(const WorkCounters& o) noexcept {
    relaxations += o.relaxations;
    candidate_evals += o.candidate_evals;
    return *this;
  }
  friend bool operator==(const WorkCounters&, const WorkCounters&) = default;
};

struct RunStats {
  WorkCounters work;
  std::map<std::string, WorkCounters> phase_work;
  std::uint64_t transport_evals = 0;
  std::map<std::string, int> sweeps;       // per phase
  std::map<std::string, double> wall_ms;   // per phase

  void add_phase_time(const std::string& phase, double ms) { wall_ms[phase] += ms; }
};

/// Adds the elapsed monotonic time to `stats.wall_ms[phase]` on destruction.
class PhaseTimer {
 public:
  PhaseTimer(RunStats& stats, std::string phase)
      : stats_(stats), phase_(std::move(phase)), start_(std::chrono::steady_clock::now()) {}
  PhaseTimer(const PhaseTimer&) = delete;
  PhaseTimer& operator=(const PhaseTimer&) = delete;
  ~PhaseTimer() { stats_.add_phase_time(phase_, elapsed_ms()); }

  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  RunStats& stats_;
  std::string phase_;
  std::chrono::steady_clock::time_point start_;
};

/// Splits an ordered node list into `parts` contiguous, near-equal batches.
inline std::vector<std::span<const std::size_t>> make_batches(std::span<const std::size_t> nodes, int parts) {
  std::vector<std::span<const std::size_t>> out;
  const auto p = static_cast<std::size_t>(std::max(1, parts));
  if (nodes.empty()) return out;
  const std::size_t n = nodes.size();
  const std::size_t count = std::min(p, n);
  std::size_t begin = 0;
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t end = n * (b + 1) / count;
    out.push_back(nodes.subspan(begin, end - begin));
    begin = end;
  }
  return out;
}

/// Relaxes one node and returns |new - old|, accumulating work counters.
using RelaxFn = std::function<double(std::size_t node, WorkCounters& work)>;

/// Repeats sweeps over the batches until `after_sweep(max_change)` returns
/// false. Each worker owns a fixed subset of batches and processes its nodes
/// in order (Gauss-Seidel). All workers meet at a barrier at the end of each
/// sweep; the maximum change is reduced there.
template <class Relax, class AfterSweep>
WorkCounters run_parallel_sweeps(std::span<const std::span<const std::size_t>> batches, int workers,
                                 Relax&& relax, AfterSweep&& after_sweep) {
  WorkCounters total;
  const auto team = static_cast<std::size_t>(std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(1, workers)), 1, std::max<std::size_t>(1, batches.size())));

  if (team == 1) {
    bool go = true;
    while (go) {
      double change = 0.0;
      for (const auto& batch : batches)
        for (std::size_t node : batch) change = std::max(change, relax(node, total));
      go = after_sweep(change);
    }
    return total;
  }

  std::vector<double> local_change(team, 0.0);
  std::vector<WorkCounters> local_work(team);
  std::exception_ptr error;
  std::mutex error_mutex;
  bool stop = false;

  auto on_complete = [&]() noexcept {
    double change = 0.0;
    for (double& c : local_change) {
      change = std::max(change, c);
      c = 0.0;
    }
    if (error) {
      stop = true;
      return;
    }
    try {
      stop = !after_sweep(change);
    } catch (...) {
      std::scoped_lock lock(error_mutex);
      error = std::current_exception();
      stop = true;
    }
  };
  std::barrier sync(static_cast<std::ptrdiff_t>(team), on_complete);

  auto body = [&](std::size_t w) {
    while (true) {
      try {
        double change = 0.0;
        for (std::size_t b = w; b < batches.size(); b += team)
          for (std::size_t node : batches[b]) change = std::max(change, relax(node, local_work[w]));
        local_change[w] = change;
      } catch (...) {
        std::scoped_lock lock(error_mutex);
        if (!error) error = std::current_exception();
      }
      sync.arrive_and_wait();
      if (stop) return;
    }
  };
  {
    std::vector<std::jthread> threads;
    threads.reserve(team - 1);
    for (std::size_t w = 1; w < team; ++w) threads.emplace_back(body, w);
    body(0);
  }
  if (error) std::rethrow_exception(error);
  for (const auto& wc : local_work) total += wc;
  return total;
}

/// One sweep; returns the maximum change over all batches.
template <class Relax>
double run_parallel_sweep(std::span<const std::span<const std::size_t>> batches, int workers, Relax&& relax,
                          WorkCounters* work = nullptr) {
  double result = 0.0;
  WorkCounters wc = run_parallel_sweeps(batches, workers, relax, [&](double change) {
    result = change;
    return false;
  });
  if (work) *work += wc;
  return result;
}

/// Runs independent tasks on a pool; workers pull the next task index from
/// a shared counter and never synchronize with each other until the join.
/// A failing task aborts the run with its id in the message.
template <class Task>
void run_patch_pool(std::size_t count, int workers, Task&& task, std::span<const std::size_t> order = {}) {
  auto id_of = [&](std::size_t slot) { return order.empty() ? slot : order[slot]; };
  const auto team = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::size_t failed_id = 0;
  std::mutex error_mutex;

  auto body = [&]() {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t slot = next.fetch_add(1, std::memory_order_relaxed);
      if (slot >= count) return;
      const std::size_t id = id_of(slot);
      try {
        task(id);
      } catch (...) {
        std::scoped_lock lock(error_mutex);
        if (!error) {
          error = std::current_exception();
          failed_id = id;
        }
        failed.store(true);
      }
    }
  };
  if (team <= 1) {
    body();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t w = 1; w < team; ++w) threads.emplace_back(body);
    body();
  }
  if (error) {
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& e) {
      throw std::runtime_error("patch " + std::to_string(failed_id) + " failed: " + e.what());
    }
  }
}

}  // namespace patchy
