#pragma once

#include <string>
#include <string_view>

namespace nct {

/// %.17g rendering; parse_double(format_double(x)) == x bitwise for finite x.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace nct
