#pragma once

#include <stdexcept>
#include <string>

namespace mvdyn {

/// A file exists but does not have the expected encoding.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mandatory input (file, directory, stream) is missing or unreadable.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Too few constraints to solve the requested estimation problem.
class DegenerateProblem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mvdyn
