#include "scenecond/json_text.hpp"

#include <cmath>
#include <cstdio>

namespace scenecond {

std::vector<std::string_view> balanced_objects(std::string_view text) {
    std::vector<std::string_view> found;
    std::size_t depth = 0;
    std::size_t start = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (depth > 0 && in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '{') {
            if (depth == 0) start = i;
            ++depth;
        } else if (c == '}' && depth > 0) {
            if (--depth == 0) found.push_back(text.substr(start, i - start + 1));
        } else if (c == '"' && depth > 0) {
            in_string = true;
        }
    }
    return found;
}

std::optional<std::string_view> first_balanced_object(std::string_view text) {
    auto all = balanced_objects(text);
    if (all.empty()) return std::nullopt;
    return all.front();
}

std::string format_decimal(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    std::string s(buf);
    if (s.find('.') != std::string::npos) {
        while (s.back() == '0') s.pop_back();
        if (s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
}

}  // namespace scenecond
