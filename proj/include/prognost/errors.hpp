// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prognost {

enum class ErrorKind {
    io,
    empty_dataset,
    parse,
    validation,
    domain,
    index,
    dimension,
    config,
    gap_too_large,
    insufficient_data,
    constant_series,
    format,
    version,
    corruption,
    contract,
    numeric,
    undefined_metric,
    usage,
};

inline std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::empty_dataset: return "empty-dataset";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::domain: return "domain";
    case ErrorKind::index: return "index";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::config: return "config";
    case ErrorKind::gap_too_large: return "gap-too-large";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::constant_series: return "constant-series";
    case ErrorKind::format: return "format";
    case ErrorKind::version: return "version";
    case ErrorKind::corruption: return "corruption";
    case ErrorKind::contract: return "contract";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::undefined_metric: return "undefined-metric";
    case ErrorKind::usage: return "usage";
    }
    return "unknown";
}

/// Single exception type for the library; `kind()` carries the error class.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

/// CLI exit code contract: 0 success, 1 usage, 2 data, 3 numeric failure.
inline int exit_code_for(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::config:
        return 1;
    case ErrorKind::numeric:
        return 3;
    default:
        return 2;
    }
}

} // namespace prognost
