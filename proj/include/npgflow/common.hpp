#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>

namespace npgflow {

// ---------------------------------------------------------------------------
// Logging. Level comes from the NPGFLOW_LOG environment variable
// (debug|info|warn|error|off), default warn. Messages go to stderr.
// ---------------------------------------------------------------------------

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

LogLevel log_level();
void set_log_level(LogLevel level);
void log_message(LogLevel level, const std::string& msg);

inline void log_debug(const std::string& m) { log_message(LogLevel::Debug, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::Info, m); }
inline void log_warn(const std::string& m) { log_message(LogLevel::Warn, m); }
inline void log_error(const std::string& m) { log_message(LogLevel::Error, m); }

// ---------------------------------------------------------------------------
// Compensated summation. Empirical averages accumulate in record order with
// Kahan compensation so results are reproducible and insensitive to magnitude
// disparities in the summands.
// ---------------------------------------------------------------------------

class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

// ---------------------------------------------------------------------------
// Deterministic randomness helpers. All sampling is built on mt19937_64 plus
// explicit bit-to-double conversion; no std distributions are used, so a seed
// pins the byte-exact output on every platform with the same IEEE doubles.
// ---------------------------------------------------------------------------

// Uniform double in [0, 1), 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes exactly two uniforms.
double normal01(std::mt19937_64& rng);

// Gamma(alpha, 1), alpha > 0, Marsaglia-Tsang with the alpha < 1 boost.
double sample_gamma(std::mt19937_64& rng, double alpha);

// splitmix64 of (base ^ golden-ratio-scrambled stream index); used to carve
// independent deterministic streams out of one user-facing seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Small numeric helpers.
// ---------------------------------------------------------------------------

// log(sum(exp(v))) with max subtraction.
double logsumexp(const Eigen::VectorXd& v);

// Softmax with max subtraction; result sums to 1.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Total variation distance between two distributions of the same length.
double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// Floor applied inside every log pi(a|x) evaluation.
inline constexpr double kLogProbFloor = 1e-12;

// log(max(p, 1e-12)).
inline double clamped_log(double p) {
  return std::log(p < kLogProbFloor ? kLogProbFloor : p);
}

}  // namespace npgflow
