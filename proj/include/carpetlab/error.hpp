#pragma once
#include <stdexcept>
#include <string>
#include <utility>

namespace carpetlab {

// Error kinds map onto the CLI exit codes: validation -> 2, invariant -> 3,
// budget -> 4. Library callers can switch on the stable code string instead
// of parsing what().
enum class errc { validation, invariant, budget };

class error : public std::runtime_error {
 public:
  error(errc kind, std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), kind_(kind), code_(std::move(code)) {}

  errc kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

 private:
  errc kind_;
  std::string code_;
};

[[noreturn]] inline void fail(errc kind, const std::string& code, const std::string& detail) {
  throw error(kind, code, detail);
}

[[noreturn]] inline void fail_validation(const std::string& code, const std::string& detail) {
  fail(errc::validation, code, detail);
}

[[noreturn]] inline void fail_budget(const std::string& code, const std::string& detail) {
  fail(errc::budget, code, detail);
}

[[noreturn]] inline void fail_invariant(const std::string& code, const std::string& detail) {
  fail(errc::invariant, code, detail);
}

// check(): invariant assertion that survives NDEBUG; used for the postconditions
// the checked mode promises to enforce.
inline void check(bool ok, const std::string& code, const std::string& detail) {
  if (!ok) fail_invariant(code, detail);
}

}  // namespace carpetlab
