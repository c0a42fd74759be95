#include "npgflow/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace npgflow {

namespace {

LogLevel parse_level(const char* s) {
  std::string v = s ? s : "";
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "debug") return LogLevel::Debug;
  if (v == "info") return LogLevel::Info;
  if (v == "warn" || v == "warning") return LogLevel::Warn;
  if (v == "error") return LogLevel::Error;
  if (v == "off" || v == "none") return LogLevel::Off;
  return LogLevel::Warn;
}

LogLevel& level_storage() {
  static LogLevel level = parse_level(std::getenv("NPGFLOW_LOG"));
  return level;
}

const char* level_name(LogLevel l) {
  switch (l) {
    case LogLevel::Debug: return "debug";
    case LogLevel::Info: return "info";
    case LogLevel::Warn: return "warn";
    case LogLevel::Error: return "error";
    default: return "off";
  }
}

}  // namespace

LogLevel log_level() { return level_storage(); }

void set_log_level(LogLevel level) { level_storage() = level; }

void log_message(LogLevel level, const std::string& msg) {
  if (level < level_storage() || level == LogLevel::Off) return;
  std::fprintf(stderr, "[npgflow %s] %s\n", level_name(level), msg.c_str());
}

double normal01(std::mt19937_64& rng) {
  // 1 - u keeps the log argument in (0, 1].
  double u1 = 1.0 - uniform01(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double sample_gamma(std::mt19937_64& rng, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("sample_gamma: alpha must be > 0");
  if (alpha < 1.0) {
    // Boost: G(alpha) = G(alpha + 1) * U^(1/alpha).
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    return sample_gamma(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal01(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base ^ (stream * 0x9E3779B97F4A7C15ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double logsumexp(const Eigen::VectorXd& v) {
  if (v.size() == 0) throw std::invalid_argument("logsumexp: empty vector");
  double m = v.maxCoeff();
  if (!std::isfinite(m)) throw std::invalid_argument("logsumexp: non-finite input");
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp();
  p /= p.sum();
  return p;
}

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: size mismatch");
  return 0.5 * (p - q).cwiseAbs().sum();
}

}  // namespace npgflow
