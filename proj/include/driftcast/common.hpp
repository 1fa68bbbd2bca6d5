#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace driftcast {

inline constexpr const char* kVersion = "0.1.0";

/// Epoch seconds.
using Timestamp = std::int64_t;

inline constexpr Timestamp kEndOfTime = std::numeric_limits<Timestamp>::max();
inline constexpr double kSecondsPerDay = 86400.0;
/// Smallest elapsed time (days) fed to the transition law; keeps v > 0.
inline constexpr double kEpsilonDays = 1e-3;

inline double elapsed_days(Timestamp from, Timestamp to) {
  return static_cast<double>(to - from) / kSecondsPerDay;
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the file and 1-based line number.
class SchemaError : public Error {
 public:
  SchemaError(std::string file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Logging. Verbosity comes from DRIFTCAST_LOG (error|warn|info|debug).

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel log_level_from_env() {
  const char* env = std::getenv("DRIFTCAST_LOG");
  if (env == nullptr) return LogLevel::warn;
  std::string_view v(env);
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

inline LogLevel& log_threshold() {
  static LogLevel level = log_level_from_env();
  return level;
}

inline void log(LogLevel level, const std::string& msg) {
  static std::mutex mu;
  if (static_cast<int>(level) > static_cast<int>(log_threshold())) return;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mu);
  std::cerr << "[driftcast " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void log_warn(const std::string& msg) { log(LogLevel::warn, msg); }
inline void log_info(const std::string& msg) { log(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::debug, msg); }

// ---------------------------------------------------------------------------
// Seeding. Every random stream is derived from an explicit seed plus an
// optional string key (a user id), never from ambient entropy.

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view key = {}) {
  const std::uint64_t k = fnv1a64(key);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace driftcast
