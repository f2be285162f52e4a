#include "agentrl/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace agentrl::reward {

namespace {

std::string strip(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Removes all whitespace and a redundant outer brace pair, for the
// string-equality route.
std::string normalize_expr(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  if (out.size() >= 2 && out.front() == '{' && out.back() == '}')
    out = out.substr(1, out.size() - 2);
  return out;
}

// Parses integers, decimals, and simple rationals "a/b". Scientific notation
// comes along free via strtod.
std::optional<double> parse_numeric(const std::string& s) {
  if (s.empty()) return std::nullopt;
  auto slash = s.find('/');
  if (slash != std::string::npos && slash > 0 && slash + 1 < s.size()) {
    std::string num = s.substr(0, slash), den = s.substr(slash + 1);
    char* end = nullptr;
    double n = std::strtod(num.c_str(), &end);
    if (end != num.c_str() + num.size()) return std::nullopt;
    double d = std::strtod(den.c_str(), &end);
    if (end != den.c_str() + den.size() || d == 0.0) return std::nullopt;
    return n / d;
  }
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::optional<std::string> extract_boxed(std::string_view text) {
  constexpr std::string_view marker = "\\boxed{";
  size_t pos = text.rfind(marker);
  if (pos == std::string_view::npos) return std::nullopt;
  size_t i = pos + marker.size();
  int depth = 1;
  std::string out;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (c == '{') ++depth;
    if (c == '}') {
      if (--depth == 0) return out;
    }
    out += c;
  }
  return std::nullopt;  // unbalanced
}

static bool answers_equivalent(std::string_view lhs, std::string_view rhs) {
  std::string p = normalize_expr(strip(lhs));
  std::string t = normalize_expr(strip(rhs));
  if (p.empty()) return false;
  if (p == t) return true;
  auto pn = parse_numeric(p);
  auto tn = parse_numeric(t);
  return pn && tn && std::fabs(*pn - *tn) <= 1e-9;
}

int verify_answer(std::string_view predicted, std::string_view truth) {
  auto boxed = extract_boxed(predicted);
  if (!boxed) return 0;  // NoBoxedAnswer
  return answers_equivalent(*boxed, truth) ? 1 : 0;
}

double tool_reward(int n_code, const RewardParams& p) {
  if (n_code <= 0) return 0.0;
  return std::min(p.r_max, p.alpha + p.beta * n_code);
}

RewardBreakdown total_reward(const protocol::Trajectory& t, std::string_view truth,
                             const RewardParams& p) {
  RewardBreakdown out;
  out.n_code = protocol::count_code_segments(t);

  // The final answer lives in the trajectory's final Think segment.
  std::string_view final_think;
  for (auto it = t.segments.rbegin(); it != t.segments.rend(); ++it) {
    if (it->kind == protocol::SegmentKind::Think) {
      final_think = it->text;
      break;
    }
  }
  out.r_acc = verify_answer(final_think, truth);
  out.r_tool = out.r_acc == 1 ? tool_reward(out.n_code, p) : 0.0;
  out.r_total = out.r_acc + (out.r_acc == 1 ? out.r_tool : 0.0);
  return out;
}

TruthSet read_truth_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open truth file: " + path);
  TruthSet truth;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    truth[j.at("problem_id").get<std::string>()] = j.at("answer").get<std::string>();
  }
  return truth;
}

void write_truth_file(const std::string& path, const TruthSet& truth) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open truth file for writing: " + path);
  for (const auto& [id, answer] : truth) {
    nlohmann::ordered_json j;
    j["problem_id"] = id;
    j["answer"] = answer;
    out << j.dump() << "\n";
  }
}

}  // namespace agentrl::reward
