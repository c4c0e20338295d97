#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xaichat::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_icase(std::string_view s, std::string_view prefix);
bool contains_icase(std::string_view haystack, std::string_view needle);

// Lowercased alphanumeric runs; everything else separates tokens.
std::vector<std::string> word_tokens(std::string_view s);

// Every standalone run of ASCII digits in `s`, in order of appearance.
std::vector<std::string> number_literals(std::string_view s);

std::size_t levenshtein(std::string_view a, std::string_view b);

// Replaces each {name} whose name is a key of `values`; other braces are kept.
std::string fill_placeholders(std::string_view tmpl,
                              const std::map<std::string, std::string>& values);

// Names of all {placeholder} occurrences, in order, duplicates removed.
std::vector<std::string> placeholders(std::string_view tmpl);

std::string format_fixed(double value, int decimals);

std::uint64_t fnv1a(std::string_view s);

// Throws Error(NotFound).
std::string read_file(const std::string& path);

}  // namespace xaichat::text
