#pragma once

#include <stdexcept>
#include <string>

namespace plr {

/// Input violated a documented precondition or schema. CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A box collapsed to zero area after clamping to the feature map.
class DegenerateRegion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The mixture fit or threshold extraction could not produce a usable
/// threshold; callers substitute the configured fallback.
class FallbackNeeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace plr
