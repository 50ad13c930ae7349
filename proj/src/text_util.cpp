#include "text_util.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "excon/error.hpp"

namespace excon::detail {

std::string format_real(double v, bool hex) {
    char buf[48];
    std::snprintf(buf, sizeof buf, hex ? "%a" : "%.17g", v);
    return buf;
}

double parse_real(std::string_view token, std::size_t line) {
    const std::string tok(trim(token));
    if (tok.empty()) throw ParseError("empty numeric field", line);
    const char* begin = tok.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end != begin + tok.size()) throw ParseError("malformed number '" + tok + "'", line);
    if (!std::isfinite(v)) throw ParseError("non-finite value '" + tok + "'", line);
    return v;
}

std::size_t parse_count(std::string_view token, std::size_t line) {
    const std::string tok(trim(token));
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError("expected a non-negative integer, got '" + tok + "'", line);
    }
    return static_cast<std::size_t>(std::stoull(tok));
}

std::vector<std::string> split_commas(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.emplace_back(trim(line.substr(start)));
            return out;
        }
        out.emplace_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace excon::detail
