#pragma once

#include <stdexcept>
#include <string>

namespace sfd {

// Input that cannot be read or decoded: missing files, bad JSON, malformed rows.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally readable input that breaks a documented invariant.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Refusal to run an exact-arithmetic computation past its size guard.
class SizeGuardError : public std::runtime_error {
public:
    explicit SizeGuardError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sfd
