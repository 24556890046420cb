#pragma once

#include <stdexcept>
#include <string>

namespace gravglue {

// Error with a stable machine-readable code ("bad-format", "support-leak", ...).
// The CLI maps codes to exit statuses; tests match on code().
class Error : public std::runtime_error {
  public:
    Error(std::string code, const std::string& detail)
        : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

  private:
    std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& detail) {
    throw Error(code, detail);
}

inline void require(bool cond, const std::string& code, const std::string& detail) {
    if (!cond) fail(code, detail);
}

}  // namespace gravglue
