#pragma once

#include <stdexcept>
#include <string>

namespace mpres {

/// Malformed or inconsistent input (bad dimensions, empty sets, bad JSON).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation would exceed a configured resource cap (e.g. dense dimension).
class ResourceCap : public std::runtime_error {
 public:
  ResourceCap(const std::string& what, std::size_t requested, std::size_t cap)
      : std::runtime_error(what), requested_(requested), cap_(cap) {}

  std::size_t requested() const noexcept { return requested_; }
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t requested_;
  std::size_t cap_;
};

/// The separation hypothesis d_S(u', u'') > 2(N+1)L does not hold, so the
/// eigenvalue-concentration bound gives no guarantee for the requested pair.
class HypothesisViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mpres
