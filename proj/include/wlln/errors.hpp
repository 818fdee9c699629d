#pragma once

#include <stdexcept>
#include <string>

namespace wlln {

/// Malformed configuration, empty grids, out-of-domain parameters.
class input_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Request beyond a model's index_cap.
class capacity_error : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// The requested exact quantity has no closed form for this model structure.
class unsupported_oracle : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace wlln
