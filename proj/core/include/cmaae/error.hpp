#pragma once

#include <stdexcept>
#include <string>

namespace cmaae {

/// Bad user input: missing files, malformed config, out-of-range arguments.
class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an API precondition (e.g. training before pre-training).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& message) {
    if (!cond) throw UserError(message);
}

inline void expect(bool cond, const std::string& message) {
    if (!cond) throw ContractError(message);
}

} // namespace cmaae
