#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "agentrl/tokenizer.hpp"

namespace agentrl::sandbox {

struct ExecRequest {
  std::string code;
  double timeout_s = 10.0;
  int output_cap_tokens = 1024;
};

enum class ExecStatus { Ok, RuntimeError, Timeout, Truncated };

std::string_view status_name(ExecStatus s);

struct ExecResult {
  ExecStatus status = ExecStatus::Ok;
  std::string output;
  double wall_time_s = 0.0;

  bool ok() const { return status == ExecStatus::Ok || status == ExecStatus::Truncated; }
};

// Latency model for simulated execution; sampling is a pure function of the
// seed so replays are identical regardless of call order.
struct LatencyDistribution {
  enum class Kind { Constant, Lognormal };
  Kind kind = Kind::Constant;
  double value = 1.2;  // seconds; mean for Lognormal
  double sigma = 0.0;

  static LatencyDistribution constant(double seconds);
  static LatencyDistribution lognormal(double mean_seconds, double sigma);

  double sample(uint64_t seed) const;
};

enum class PoolMode { RealSubprocess, Simulated };

struct PoolConfig {
  int workers = 8;
  double default_timeout_s = 10.0;
  int default_output_cap_tokens = 1024;
  PoolMode mode = PoolMode::RealSubprocess;
  LatencyDistribution latency;
  std::string interpreter_cmd = "python3";
};

/**
 * Worker pool executing code in isolated subprocesses.
 *
 * Each request runs in a fresh interpreter process inside a private temp
 * directory, in its own process group, with stdout+stderr captured. Wall
 * clock overruns kill the whole group. Output is capped in tokens, cut at a
 * token boundary. Concurrency is bounded by `workers`; callers block until
 * their own result is ready.
 */
class Pool {
 public:
  explicit Pool(PoolConfig cfg, const Tokenizer& tok = default_tokenizer());
  ~Pool();

  Pool(const Pool&) = delete;
  Pool& operator=(const Pool&) = delete;

  ExecResult execute(const ExecRequest& req);
  std::vector<ExecResult> execute_batch(const std::vector<ExecRequest>& reqs);

  // Simulated mode: deterministic latency draw, placeholder output derived
  // from the seed. Does not touch the worker queue.
  ExecResult simulated_execute(const ExecRequest& req, uint64_t rng_seed) const;

  const PoolConfig& config() const { return cfg_; }

 private:
  struct Task {
    ExecRequest req;
    std::promise<ExecResult> done;
  };

  void worker_loop();
  std::future<ExecResult> submit(const ExecRequest& req);

  PoolConfig cfg_;
  const Tokenizer& tok_;
  std::vector<std::thread> workers_;
  std::deque<std::shared_ptr<Task>> queue_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
};

// Single-shot subprocess execution (used by the pool workers).
ExecResult run_subprocess(const ExecRequest& req, const std::string& interpreter_cmd,
                          const Tokenizer& tok);

// Placeholder interpreter text for simulated runs: `approx_tokens` filler
// words derived from the seed.
std::string simulated_output(uint64_t seed, int approx_tokens);

}  // namespace agentrl::sandbox
