#pragma once

#include <stdexcept>
#include <string>

namespace mine {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Index outside its valid range (class ids, token ids, positions).
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A caller broke an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Numerical failure during training (NaN/Inf).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// On-disk artifact does not match its manifest.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file or record.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A remote service could not be reached or answered out of protocol.
class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mine
