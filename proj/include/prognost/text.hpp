// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace prognost::text {

/// Shortest decimal text that parses back to the identical 64-bit value.
inline std::string format_double(double value)
{
    if (std::isnan(value)) {
        return "nan";
    }
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, end);
}

/// Parses the whole token as a double, or nothing. Leading '+' is accepted.
inline std::optional<double> parse_double(std::string_view token)
{
    if (!token.empty() && token.front() == '+') {
        token.remove_prefix(1);
    }
    if (token.empty()) {
        return std::nullopt;
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        return std::nullopt;
    }
    return value;
}

inline std::optional<long long> parse_int(std::string_view token)
{
    if (token.empty()) {
        return std::nullopt;
    }
    long long value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        return std::nullopt;
    }
    return value;
}

inline std::string_view trim(std::string_view s)
{
    constexpr std::string_view ws = " \t\r\n\v\f";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

/// Splits on runs of spaces/tabs; empty tokens are never produced.
inline std::vector<std::string_view> split_whitespace(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
            ++i;
        }
        if (i > start) {
            out.push_back(line.substr(start, i - start));
        }
    }
    return out;
}

/// Splits on a single delimiter character; keeps empty fields.
inline std::vector<std::string_view> split_on(std::string_view line, char delim)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

/// Line iterator that also reports the byte offset where each line starts.
class LineReader {
public:
    explicit LineReader(std::string_view content) : content_(content) {}

    bool next(std::string_view& line)
    {
        if (pos_ >= content_.size()) {
            return false;
        }
        line_offset_ = pos_;
        const auto nl = content_.find('\n', pos_);
        if (nl == std::string_view::npos) {
            line = content_.substr(pos_);
            pos_ = content_.size();
        } else {
            line = content_.substr(pos_, nl - pos_);
            pos_ = nl + 1;
        }
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        ++line_number_;
        return true;
    }

    std::size_t line_number() const noexcept { return line_number_; }
    std::size_t line_offset() const noexcept { return line_offset_; }
    std::size_t offset() const noexcept { return pos_; }

private:
    std::string_view content_;
    std::size_t pos_ = 0;
    std::size_t line_offset_ = 0;
    std::size_t line_number_ = 0;
};

} // namespace prognost::text
