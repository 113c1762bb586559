// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace heatkv {

/// Stable error categories, mirrored one-to-one by the C API status codes.
enum class ErrorCode {
    invalid_argument = 1,
    validation = 2,
    budget = 3,
    io = 4,
    parse = 5,
    data = 6,
    schedule = 7,
    unsupported = 8,
    internal = 9,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message) : std::runtime_error(std::move(message)), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

struct ArgumentError : Error {
    explicit ArgumentError(std::string m) : Error(ErrorCode::invalid_argument, std::move(m)) {}
};

/// Out-of-range scale/layer/head index. Shares the invalid_argument category.
struct IndexError : Error {
    explicit IndexError(std::string m) : Error(ErrorCode::invalid_argument, std::move(m)) {}
};

struct ValidationError : Error {
    explicit ValidationError(std::string m) : Error(ErrorCode::validation, std::move(m)) {}
};

struct BudgetError : Error {
    explicit BudgetError(std::string m) : Error(ErrorCode::budget, std::move(m)) {}
};

struct IoError : Error {
    explicit IoError(std::string m) : Error(ErrorCode::io, std::move(m)) {}
};

struct ParseError : Error {
    explicit ParseError(std::string m) : Error(ErrorCode::parse, std::move(m)) {}
};

struct DataError : Error {
    explicit DataError(std::string m) : Error(ErrorCode::data, std::move(m)) {}
};

struct ScheduleError : Error {
    explicit ScheduleError(std::string m) : Error(ErrorCode::schedule, std::move(m)) {}
};

struct UnsupportedError : Error {
    explicit UnsupportedError(std::string m) : Error(ErrorCode::unsupported, std::move(m)) {}
};

struct InternalError : Error {
    explicit InternalError(std::string m) : Error(ErrorCode::internal, std::move(m)) {}
};

namespace detail {

inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& out, T&& head, Rest&&... rest) {
    out << head;
    format_into(out, std::forward<Rest>(rest)...);
}

}  // namespace detail

/// Builds a message from stream-printable pieces, e.g. msg("k=", k, " out of range").
template <typename... Parts>
std::string msg(Parts&&... parts) {
    std::ostringstream out;
    detail::format_into(out, std::forward<Parts>(parts)...);
    return out.str();
}

}  // namespace heatkv
