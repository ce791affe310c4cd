#pragma once

#include <stdexcept>
#include <string>

namespace shiftex {

/// Raised when a caller violates an operation's precondition (bad shapes,
/// empty inputs, out-of-range values, malformed configs).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw UsageError(what);
}

} // namespace shiftex
