#ifndef DYPLOC_ERRORS_HPP
#define DYPLOC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dyploc {

// Malformed or invalid input data (corpus lines, resource files, configs).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses, non-normalized distributions and the like.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dyploc

#endif
