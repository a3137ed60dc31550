#include "divek/category.hpp"

#include <cctype>

#include "divek/errors.hpp"
#include "divek/response_parser.hpp"

namespace divek {

CategoryName normalize_category(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char ch : raw) {
    if (std::isspace(ch)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return CategoryName{std::string(raw), std::move(out)};
}

std::vector<CategoryName> normalize_all(const std::vector<std::string>& raws) {
  std::vector<CategoryName> out;
  out.reserve(raws.size());
  for (const auto& r : raws) out.push_back(normalize_category(r));
  return out;
}

std::string_view to_string(ImageSource s) {
  switch (s) {
    case ImageSource::FilePath: return "file-path";
    case ImageSource::Url: return "url";
    case ImageSource::SyntheticWorldSample: return "synthetic-world-sample";
  }
  return "synthetic-world-sample";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Base: return "base";
    case Split::Novel: return "novel";
    case Split::Unsplit: return "unsplit";
  }
  return "unsplit";
}

ImageSource image_source_from_string(std::string_view s) {
  if (s == "file-path") return ImageSource::FilePath;
  if (s == "url") return ImageSource::Url;
  if (s == "synthetic-world-sample") return ImageSource::SyntheticWorldSample;
  throw ConfigError("unknown image source '" + std::string(s) + "'");
}

Split split_from_string(std::string_view s) {
  if (s == "base") return Split::Base;
  if (s == "novel") return Split::Novel;
  if (s == "unsplit") return Split::Unsplit;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

RolloutRecord make_rollout(const ImageRef& image, int rollout_index, std::string raw_text) {
  RolloutRecord r;
  r.image = image;
  r.rollout_index = rollout_index;
  const ParsedResponse parsed = parse_tagged_response(raw_text);
  r.reasoning = parsed.reasoning;
  if (parsed.answer_payload) {
    CategoryName name = normalize_category(*parsed.answer_payload);
    if (name.valid()) r.predicted_category = std::move(name);
  }
  r.format_ok = parsed.format_ok && r.reasoning.has_value() && r.predicted_category.has_value();
  r.raw_text = std::move(raw_text);
  return r;
}

}  // namespace divek
