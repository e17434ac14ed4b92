#pragma once

#include <stdexcept>
#include <string>

namespace camc {

// Error taxonomy shared by every module. Each maps to one failure class
// callers are expected to handle differently (bad shapes vs bad files vs
// numerical blow-ups).

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A caller broke a documented precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf or a zero probability where one is not allowed.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Wrong magic/version/config in a container file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Truncated or corrupt entropy-coded payload.
class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// RD evaluation that cannot be carried out (e.g. curves without overlap).
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace camc
