#include "nct/text_format.hpp"

#include "nct/error.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace nct {

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

double parse_double(std::string_view text) {
    const std::string owned(text);
    char* end = nullptr;
    errno = 0;
    const double value = std::strtod(owned.c_str(), &end);
    if (owned.empty() || end != owned.c_str() + owned.size() || (errno == ERANGE && std::abs(value) == HUGE_VAL)) {
        throw Error(ErrorCode::ParseError, "not a number: '" + owned + "'");
    }
    return value;
}

}  // namespace nct
