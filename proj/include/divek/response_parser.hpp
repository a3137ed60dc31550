#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "divek/category.hpp"

namespace divek {

/// Result of scanning model output for <think>/<answer> spans.
///
/// format_ok holds only for the exact shape
///   <think>...</think> <answer>...</answer>
/// with nothing but whitespace around and between the spans, no repeated or
/// nested tags, and a non-empty answer. Anything else still yields whatever
/// spans could be recovered.
struct ParsedResponse {
  std::optional<std::string> reasoning;
  std::optional<std::string> answer_payload;
  bool format_ok = false;
};

ParsedResponse parse_tagged_response(std::string_view text);

/// Content of the first complete <tag>...</tag> span at or after `from`,
/// trimmed. Used by the judge reply parser as well.
std::optional<std::string> extract_tag(std::string_view text, std::string_view tag,
                                       std::size_t from = 0);

using LetteredOption = std::pair<char, CategoryName>;

/// Maps an answer payload onto one of the lettered options. Accepts a bare
/// letter, an "X." / "X)" prefix, or a name equal (after normalization) to
/// exactly one option. Letters are case-insensitive. Never returns a letter
/// outside `options`.
std::optional<char> extract_option_letter(std::string_view answer_payload,
                                          const std::vector<LetteredOption>& options);

/// Letter of the single option whose normalized name occurs inside the
/// normalized text; none when zero or several options occur.
std::optional<char> unique_name_in_text(std::string_view text,
                                        const std::vector<LetteredOption>& options);

std::string trim(std::string_view s);

}  // namespace divek
