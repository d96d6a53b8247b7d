#pragma once

#include <stdexcept>
#include <string>

namespace alnp3 {

// Operand shapes do not conform for the named operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical domain violation (non-finite input, log of a non-positive value,
// zero-norm embedding).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A caller broke an operation precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace alnp3
