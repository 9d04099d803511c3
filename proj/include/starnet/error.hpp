#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace starnet {

// Runtime error carrying a stable, machine-readable category string.
// The CLI prints the category on stderr so callers can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

}  // namespace starnet
