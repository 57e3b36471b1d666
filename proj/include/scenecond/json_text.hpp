#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scenecond {

/// Byte ranges of every balanced top-level `{...}` in `text`, in order of
/// appearance. Braces inside JSON string literals are ignored. Nested objects
/// are not reported separately.
std::vector<std::string_view> balanced_objects(std::string_view text);

/// First balanced top-level object, or nullopt when the text holds none.
std::optional<std::string_view> first_balanced_object(std::string_view text);

/// Decimal rendering with at most six fractional digits, trailing zeros
/// trimmed ("2", "0.5", "-1.25"). Negative zero prints as "0".
std::string format_decimal(double value);

}  // namespace scenecond
