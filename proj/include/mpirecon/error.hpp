#pragma once

#include <stdexcept>
#include <string>

namespace mpirecon {

// Base for every failure raised by the toolchain. The CLI maps these to
// exit code 2; anything else escaping is a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing or rejected API token.
class CredentialError : public Error {
public:
    using Error::Error;
};

// Rate limit still in force after the retry budget was spent.
class RateLimitError : public Error {
public:
    using Error::Error;
};

// The hosting API answered with something we cannot interpret.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class BudgetError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Argument outside an operation's domain (unknown collective, a == b, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Caller broke a documented precondition, e.g. passed unsorted sites.
class ContractError : public Error {
public:
    using Error::Error;
};

} // namespace mpirecon
