#include "agentrl/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "agentrl/rng.hpp"

namespace agentrl::sandbox {

namespace fs = std::filesystem;

std::string_view status_name(ExecStatus s) {
  switch (s) {
    case ExecStatus::Ok: return "ok";
    case ExecStatus::RuntimeError: return "runtime_error";
    case ExecStatus::Timeout: return "timeout";
    case ExecStatus::Truncated: return "truncated";
  }
  return "?";
}

LatencyDistribution LatencyDistribution::constant(double seconds) {
  return {Kind::Constant, seconds, 0.0};
}

LatencyDistribution LatencyDistribution::lognormal(double mean_seconds, double sigma) {
  return {Kind::Lognormal, mean_seconds, sigma};
}

double LatencyDistribution::sample(uint64_t seed) const {
  if (kind == Kind::Constant || sigma <= 0.0) return value;
  Rng rng(splitmix64(seed ^ 0x746f6f6c6c617ULL));
  return rng.lognormal_mean(value, sigma);
}

std::string simulated_output(uint64_t seed, int approx_tokens) {
  if (approx_tokens < 1) approx_tokens = 1;
  std::string out;
  out.reserve(static_cast<size_t>(approx_tokens) * 6);
  uint64_t h = splitmix64(seed);
  for (int i = 0; i < approx_tokens; ++i) {
    if (i) out += ' ';
    out += 'o';
    out += std::to_string((h >> (i % 32)) & 0xfff);
  }
  return out;
}

// ============================================================================
// Subprocess execution
// ============================================================================

namespace {

std::vector<std::string> split_command(const std::string& cmd) {
  std::vector<std::string> parts;
  std::istringstream ss(cmd);
  std::string w;
  while (ss >> w) parts.push_back(w);
  return parts;
}

void strip_trailing_newlines(std::string& s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
}

struct ScratchDir {
  fs::path path;
  ScratchDir() {
    std::string tmpl = (fs::temp_directory_path() / "agentrl-sbx-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path = buf.data();
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

ExecResult run_subprocess(const ExecRequest& req, const std::string& interpreter_cmd,
                          const Tokenizer& tok) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  ScratchDir scratch;
  const fs::path script = scratch.path / "snippet";
  {
    std::ofstream f(script);
    f << req.code;
  }

  int pipefd[2];
  if (pipe(pipefd) != 0) throw std::runtime_error("pipe failed");

  std::vector<std::string> argv_s = split_command(interpreter_cmd);
  if (argv_s.empty()) throw std::runtime_error("empty interpreter command");
  argv_s.push_back(script.string());

  pid_t pid = fork();
  if (pid < 0) {
    close(pipefd[0]);
    close(pipefd[1]);
    throw std::runtime_error("fork failed");
  }
  if (pid == 0) {
    setpgid(0, 0);
    // Best effort: drop network access when the kernel allows it.
#ifdef CLONE_NEWNET
    unshare(CLONE_NEWNET);
#endif
    if (chdir(scratch.path.c_str()) != 0) _exit(126);
    dup2(pipefd[1], STDOUT_FILENO);
    dup2(pipefd[1], STDERR_FILENO);
    close(pipefd[0]);
    close(pipefd[1]);
    std::vector<char*> argv;
    argv.reserve(argv_s.size() + 1);
    for (auto& s : argv_s) argv.push_back(s.data());
    argv.push_back(nullptr);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(pipefd[1]);

  // Capture until EOF or deadline; beyond the byte cap we keep draining so
  // the child never blocks on a full pipe.
  const auto deadline = start + std::chrono::duration<double>(req.timeout_s);
  const size_t byte_cap = 1u << 20;
  std::string raw;
  bool timed_out = false;
  char buf[8192];
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{pipefd[0], POLLIN, 0};
    int pr = poll(&pfd, 1, static_cast<int>(left.count()));
    if (pr == 0) {
      timed_out = true;
      break;
    }
    if (pr < 0) {
      if (errno == EINTR) continue;
      break;
    }
    ssize_t n = read(pipefd[0], buf, sizeof(buf));
    if (n <= 0) break;  // EOF or error: child closed its end
    if (raw.size() < byte_cap) raw.append(buf, buf + std::min<size_t>(n, byte_cap - raw.size()));
  }
  close(pipefd[0]);

  int wstatus = 0;
  if (timed_out) {
    kill(-pid, SIGKILL);
    kill(pid, SIGKILL);  // in case setpgid lost the race
  }
  waitpid(pid, &wstatus, 0);

  ExecResult res;
  res.wall_time_s = std::chrono::duration<double>(clock::now() - start).count();
  strip_trailing_newlines(raw);

  const int raw_tokens = tok.count(raw);
  const bool over_cap = raw_tokens > req.output_cap_tokens;
  res.output = over_cap ? std::string(tok.prefix(raw, req.output_cap_tokens)) : std::move(raw);

  if (timed_out) {
    res.status = ExecStatus::Timeout;
  } else if (WIFEXITED(wstatus) && WEXITSTATUS(wstatus) == 0) {
    res.status = over_cap ? ExecStatus::Truncated : ExecStatus::Ok;
  } else {
    res.status = ExecStatus::RuntimeError;
  }
  return res;
}

// ============================================================================
// Pool
// ============================================================================

Pool::Pool(PoolConfig cfg, const Tokenizer& tok) : cfg_(std::move(cfg)), tok_(tok) {
  if (cfg_.workers < 1) throw std::invalid_argument("sandbox pool needs >= 1 worker");
  if (cfg_.mode == PoolMode::RealSubprocess) {
    workers_.reserve(static_cast<size_t>(cfg_.workers));
    for (int i = 0; i < cfg_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  }
}

Pool::~Pool() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& w : workers_) w.join();
}

void Pool::worker_loop() {
  while (true) {
    std::shared_ptr<Task> task;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_ && queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      task->done.set_value(run_subprocess(task->req, cfg_.interpreter_cmd, tok_));
    } catch (...) {
      task->done.set_exception(std::current_exception());
    }
  }
}

std::future<ExecResult> Pool::submit(const ExecRequest& req) {
  auto task = std::make_shared<Task>();
  task->req = req;
  auto fut = task->done.get_future();
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
  return fut;
}

ExecResult Pool::execute(const ExecRequest& req) {
  if (cfg_.mode != PoolMode::RealSubprocess)
    throw std::logic_error("execute() requires RealSubprocess mode");
  return submit(req).get();
}

std::vector<ExecResult> Pool::execute_batch(const std::vector<ExecRequest>& reqs) {
  if (cfg_.mode != PoolMode::RealSubprocess)
    throw std::logic_error("execute_batch() requires RealSubprocess mode");
  std::vector<std::future<ExecResult>> futs;
  futs.reserve(reqs.size());
  for (const auto& r : reqs) futs.push_back(submit(r));
  std::vector<ExecResult> out;
  out.reserve(reqs.size());
  for (auto& f : futs) out.push_back(f.get());
  return out;
}

ExecResult Pool::simulated_execute(const ExecRequest& req, uint64_t rng_seed) const {
  ExecResult res;
  res.status = ExecStatus::Ok;
  res.wall_time_s = cfg_.latency.sample(rng_seed);
  int tokens = 8 + static_cast<int>(splitmix64(rng_seed ^ 0x6f7574ULL) % 48);
  if (tokens > req.output_cap_tokens) tokens = req.output_cap_tokens;
  res.output = simulated_output(rng_seed, tokens);
  return res;
}

}  // namespace agentrl::sandbox
