#pragma once

#include "fema/numeric/tensor.hpp"

#include <optional>
#include <string_view>

namespace fema {

/// How an environment step ended. Only the final step of an episode carries a
/// tag other than `none`; `hazard` and `time_limit` never co-occur.
enum class EndTag : std::uint8_t { none = 0, hazard = 1, time_limit = 2 };

std::string_view to_string(EndTag tag);
std::optional<EndTag> parse_end_tag(std::string_view s);

struct Transition {
  Vector s;
  Vector a;  // the action applied to the environment
  double r = 0.0;
  Vector s_next;
  EndTag end = EndTag::none;
};

}  // namespace fema
