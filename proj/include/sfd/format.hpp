#pragma once

#include <string>

namespace sfd {

// Scientific notation with 17 significant digits ("%.16e"): enough to
// round-trip any double exactly, satisfying the >= 15 digit file contracts.
std::string format_sci(double v);

// Shortest-ish general formatting for human-facing reports ("%.6g").
std::string format_g(double v);

// JSON string escaping (quotes, backslash, control characters).
std::string json_escape(const std::string& s);

}  // namespace sfd
