#include "fema/types.hpp"

namespace fema {

std::string_view to_string(EndTag tag) {
  switch (tag) {
    case EndTag::none:
      return "none";
    case EndTag::hazard:
      return "hazard";
    case EndTag::time_limit:
      return "time_limit";
  }
  return "?";
}

std::optional<EndTag> parse_end_tag(std::string_view s) {
  if (s == "none") return EndTag::none;
  if (s == "hazard") return EndTag::hazard;
  if (s == "time_limit") return EndTag::time_limit;
  return std::nullopt;
}

}  // namespace fema
