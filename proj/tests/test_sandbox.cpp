#include <doctest.h>

#include <chrono>
#include <string>
#include <vector>

#include "agentrl/sandbox.hpp"
#include "agentrl/scheduler.hpp"
#include "agentrl/sim_clock.hpp"

using namespace agentrl;
using namespace agentrl::sandbox;

namespace {

PoolConfig real_config(int workers = 4) {
  PoolConfig cfg;
  cfg.workers = workers;
  cfg.default_timeout_s = 10.0;
  cfg.mode = PoolMode::RealSubprocess;
  return cfg;
}

}  // namespace

TEST_CASE("execute: arithmetic output") {
  Pool pool(real_config(1));
  auto res = pool.execute({"print(2**10)", 10.0, 1024});
  CHECK(res.status == ExecStatus::Ok);
  CHECK(res.output == "1024");
}

TEST_CASE("execute: runtime error carries the error text") {
  Pool pool(real_config(1));
  auto res = pool.execute({"raise ValueError('boom')", 10.0, 1024});
  CHECK(res.status == ExecStatus::RuntimeError);
  CHECK(res.output.find("boom") != std::string::npos);
}

TEST_CASE("execute: infinite loop hits the timeout") {
  Pool pool(real_config(1));
  auto start = std::chrono::steady_clock::now();
  auto res = pool.execute({"while True: pass", 2.0, 1024});
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(res.status == ExecStatus::Timeout);
  CHECK(elapsed >= 1.9);
  CHECK(elapsed < 8.0);
}

TEST_CASE("execute: oversized output truncates at the token cap") {
  Pool pool(real_config(1));
  // ~100k characters of output against a 1024-token cap.
  auto res = pool.execute({"print('ab '*33334)", 15.0, 1024});
  CHECK(res.status == ExecStatus::Truncated);
  CHECK(default_tokenizer().count(res.output) <= 1024);
  CHECK(!res.output.empty());
}

TEST_CASE("cap monotonicity: lower-cap output is a prefix of higher-cap output") {
  Pool pool(real_config(2));
  const std::string program = "print(' '.join(str(i*i) for i in range(200)))";
  auto small = pool.execute({program, 10.0, 16});
  auto large = pool.execute({program, 10.0, 64});
  CHECK(small.status == ExecStatus::Truncated);
  CHECK(large.output.substr(0, small.output.size()) == small.output);
}

TEST_CASE("execute_batch: results in request order, parallel wall time") {
  Pool pool(real_config(8));
  std::vector<ExecRequest> reqs;
  for (int i = 0; i < 8; ++i)
    reqs.push_back({"import time\ntime.sleep(1)\nprint(" + std::to_string(i) + ")", 10.0, 64});
  auto start = std::chrono::steady_clock::now();
  auto results = pool.execute_batch(reqs);
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  REQUIRE(results.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(results[static_cast<size_t>(i)].status == ExecStatus::Ok);
    CHECK(results[static_cast<size_t>(i)].output == std::to_string(i));
  }
  // Eight one-second sleeps on eight workers: far below the 8 s serial sum.
  CHECK(elapsed < 2.0);
}

TEST_CASE("execute_batch: empty list") {
  Pool pool(real_config(2));
  CHECK(pool.execute_batch({}).empty());
}

TEST_CASE("execute_batch: timeout and success stay independent") {
  Pool pool(real_config(2));
  std::vector<ExecRequest> reqs = {
      {"while True: pass", 1.5, 64},
      {"print('fine')", 10.0, 64},
  };
  auto results = pool.execute_batch(reqs);
  CHECK(results[0].status == ExecStatus::Timeout);
  CHECK(results[1].status == ExecStatus::Ok);
  CHECK(results[1].output == "fine");
}

TEST_CASE("isolation: concurrent programs cannot see each other's scratch space") {
  Pool pool(real_config(2));
  // Each program writes a marker into its cwd, waits, then looks around.
  auto program = [](const std::string& mine, const std::string& other) {
    return "import os, time\n"
           "open('" + mine + "', 'w').write('x')\n"
           "time.sleep(0.8)\n"
           "print(sorted(f for f in os.listdir('.') if f.endswith('.marker')))\n"
           "print(os.path.exists('" + other + "'))\n";
  };
  std::vector<ExecRequest> reqs = {
      {program("a.marker", "b.marker"), 10.0, 256},
      {program("b.marker", "a.marker"), 10.0, 256},
  };
  auto results = pool.execute_batch(reqs);
  CHECK(results[0].output == "['a.marker']\nFalse");
  CHECK(results[1].output == "['b.marker']\nFalse");
}

TEST_CASE("simulated_execute: deterministic for a fixed seed") {
  PoolConfig cfg;
  cfg.mode = PoolMode::Simulated;
  cfg.latency = LatencyDistribution::lognormal(1.2, 0.6);
  Pool pool(cfg);
  auto a = pool.simulated_execute({"whatever", 5.0, 1024}, 7);
  auto b = pool.simulated_execute({"whatever", 5.0, 1024}, 7);
  CHECK(a.wall_time_s == b.wall_time_s);
  CHECK(a.output == b.output);
  auto c = pool.simulated_execute({"whatever", 5.0, 1024}, 8);
  CHECK(a.wall_time_s != c.wall_time_s);
}

TEST_CASE("simulated_execute: constant distribution pins the wall time") {
  PoolConfig cfg;
  cfg.mode = PoolMode::Simulated;
  cfg.latency = LatencyDistribution::constant(1.2);
  Pool pool(cfg);
  CHECK(pool.simulated_execute({"x", 5.0, 1024}, 123).wall_time_s == 1.2);
}

TEST_CASE("simulated service: one worker serializes eight 175s calls to 1400s") {
  // Sum oracle: 8 sequential 175 s executions = 1400 s of virtual time.
  sim::EventQueue queue;
  PoolConfig cfg;
  cfg.workers = 1;
  cfg.latency = LatencyDistribution::constant(175.0);
  scheduler::SimToolService service(cfg, queue);

  int done = 0;
  for (int i = 0; i < 8; ++i)
    service.submit({"x", 5.0, 64}, static_cast<uint64_t>(i),
                   [&done](const ExecResult&) { ++done; });
  queue.run();
  CHECK(done == 8);
  CHECK(queue.now() == doctest::Approx(1400.0));
}

TEST_CASE("simulated service: ample workers overlap the batch") {
  sim::EventQueue queue;
  PoolConfig cfg;
  cfg.workers = 16;
  cfg.latency = LatencyDistribution::constant(1.2);
  scheduler::SimToolService service(cfg, queue);
  int done = 0;
  for (int i = 0; i < 16; ++i)
    service.submit({"x", 5.0, 64}, static_cast<uint64_t>(i),
                   [&done](const ExecResult&) { ++done; });
  queue.run();
  CHECK(done == 16);
  CHECK(queue.now() == doctest::Approx(1.2));
}
