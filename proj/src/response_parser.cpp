#include "divek/response_parser.hpp"

#include <algorithm>
#include <cctype>

namespace divek {
namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

std::size_t count_of(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

bool all_space(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::optional<char> find_letter(char candidate, const std::vector<LetteredOption>& options) {
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(candidate)));
  for (const auto& [letter, name] : options) {
    if (letter == upper) return letter;
  }
  return std::nullopt;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<std::string> extract_tag(std::string_view text, std::string_view tag,
                                       std::size_t from) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  const std::size_t o = text.find(open, from);
  if (o == std::string_view::npos) return std::nullopt;
  const std::size_t c = text.find(close, o + open.size());
  if (c == std::string_view::npos) return std::nullopt;
  return trim(text.substr(o + open.size(), c - o - open.size()));
}

ParsedResponse parse_tagged_response(std::string_view text) {
  ParsedResponse out;

  const std::size_t think_open = text.find(kThinkOpen);
  std::size_t think_end = std::string_view::npos;
  if (think_open != std::string_view::npos) {
    const std::size_t think_close = text.find(kThinkClose, think_open + kThinkOpen.size());
    if (think_close != std::string_view::npos) {
      out.reasoning = trim(text.substr(think_open + kThinkOpen.size(),
                                       think_close - think_open - kThinkOpen.size()));
      think_end = think_close + kThinkClose.size();
    }
  }
  if (think_end != std::string_view::npos) {
    out.answer_payload = extract_tag(text, "answer", think_end);
  }
  if (!out.answer_payload) out.answer_payload = extract_tag(text, "answer", 0);

  // Strict shape check on the trimmed text.
  const std::string t = trim(text);
  const std::string_view v(t);
  if (count_of(v, kThinkOpen) != 1 || count_of(v, kThinkClose) != 1 ||
      count_of(v, kAnswerOpen) != 1 || count_of(v, kAnswerClose) != 1) {
    return out;
  }
  const std::size_t to = v.find(kThinkOpen);
  const std::size_t tc = v.find(kThinkClose);
  const std::size_t ao = v.find(kAnswerOpen);
  const std::size_t ac = v.find(kAnswerClose);
  const bool shape = to == 0 && tc > to && ao >= tc + kThinkClose.size() && ac > ao &&
                     ac + kAnswerClose.size() == v.size() &&
                     all_space(v.substr(tc + kThinkClose.size(), ao - tc - kThinkClose.size()));
  out.format_ok = shape && out.answer_payload && !out.answer_payload->empty();
  return out;
}

std::optional<char> extract_option_letter(std::string_view answer_payload,
                                          const std::vector<LetteredOption>& options) {
  const std::string p = trim(answer_payload);
  if (p.empty() || options.empty()) return std::nullopt;

  const auto is_alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
  if (p.size() == 1 && is_alpha(p[0])) {
    if (auto l = find_letter(p[0], options)) return l;
  }
  if (p.size() >= 2 && is_alpha(p[0]) && (p[1] == '.' || p[1] == ')')) {
    if (auto l = find_letter(p[0], options)) return l;
  }

  const std::string normalized = normalize_category(p).normalized;
  std::optional<char> match;
  for (const auto& [letter, name] : options) {
    if (name.normalized == normalized) {
      if (match) return std::nullopt;
      match = letter;
    }
  }
  return match;
}

std::optional<char> unique_name_in_text(std::string_view text,
                                        const std::vector<LetteredOption>& options) {
  const std::string haystack = normalize_category(text).normalized;
  std::optional<char> match;
  for (const auto& [letter, name] : options) {
    if (!name.valid() || haystack.find(name.normalized) == std::string::npos) continue;
    if (match) return std::nullopt;
    match = letter;
  }
  return match;
}

}  // namespace divek
