#pragma once

#include <span>
#include <string>

namespace sqr {

/// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double value);

/// Comma-joined format_double values.
std::string format_row(std::span<const double> values);

}  // namespace sqr
