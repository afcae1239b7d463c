#pragma once

#include <string>

namespace dualenkf {

/// Shortest decimal string that round-trips to the same double. Used for
/// every numeric file so reruns compare byte for byte.
std::string format_number(double value);

}  // namespace dualenkf
