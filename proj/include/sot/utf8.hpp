#pragma once

#include <string>
#include <string_view>

namespace sot::utf8 {

/// Throws Error(validation_error) on malformed input.
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view text);
/// Number of code points; malformed input throws.
std::size_t length(std::string_view text);

}  // namespace sot::utf8
