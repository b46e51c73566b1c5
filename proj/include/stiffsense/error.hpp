#pragma once

#include <stdexcept>
#include <string>

namespace stiffsense {

// Usage / configuration problems. The CLI maps these to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Data or numerical problems in otherwise valid requests. Exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A per-trial estimation failure. Carries a short machine-readable code so
// pipelines can record the reason instead of dropping the trial.
class EstimationError : public DataError {
 public:
  EstimationError(std::string code, const std::string& msg)
      : DataError(code + ": " + msg), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

namespace errc {
inline constexpr const char* degenerate_signal = "degenerate-signal";
inline constexpr const char* no_complex_root = "no-complex-root";
inline constexpr const char* numerical_failure = "numerical-failure";
inline constexpr const char* fit_failure = "fit-failure";
inline constexpr const char* undefined_gof = "undefined-gof";
}  // namespace errc

}  // namespace stiffsense
