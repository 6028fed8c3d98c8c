#pragma once

#include <string>
#include <string_view>

namespace plr {

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double x);

/// Strict full-string parse; throws ValidationError on trailing garbage.
double parse_double(std::string_view s);

}  // namespace plr
