#pragma once

#include <string>
#include <string_view>

namespace pamda {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

/// Strict parse of a full decimal literal; throws SchemaError mentioning
/// `context` on trailing junk or an empty field.
double parse_double(std::string_view text, std::string_view context);
long long parse_integer(std::string_view text, std::string_view context);

}  // namespace pamda
