#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace divek {

/// A category name as emitted by a model or a dataset, plus its canonical
/// form: ASCII case-folded, trimmed, internal whitespace runs collapsed.
/// No stemming or alias resolution happens here.
struct CategoryName {
  std::string raw;
  std::string normalized;

  bool valid() const { return !normalized.empty(); }
  bool operator==(const CategoryName&) const = default;
};

CategoryName normalize_category(std::string_view raw);

/// Equality under normalization.
inline bool same_category(const CategoryName& a, const CategoryName& b) {
  return a.normalized == b.normalized;
}

std::vector<CategoryName> normalize_all(const std::vector<std::string>& raws);

enum class ImageSource { FilePath, Url, SyntheticWorldSample };
enum class Split { Base, Novel, Unsplit };

std::string_view to_string(ImageSource s);
std::string_view to_string(Split s);
ImageSource image_source_from_string(std::string_view s);
Split split_from_string(std::string_view s);

/// Opaque reference to one input image. `uri` is the file path or URL for
/// real images and empty for synthetic world samples.
struct ImageRef {
  std::string id;
  ImageSource source = ImageSource::SyntheticWorldSample;
  Split split = Split::Unsplit;
  std::string uri;

  bool operator==(const ImageRef&) const = default;
};

namespace templates {
inline constexpr std::string_view kStep1 = "step1";
inline constexpr std::string_view kMcq = "mcq";
inline constexpr std::string_view kJudge = "judge";
}  // namespace templates

/// A rendered prompt. For the MCQ template `category_list` holds the options
/// in letter order; for step 1 it holds the category list shown to the model.
struct QueryPrompt {
  std::string template_id;
  std::string rendered;
  std::optional<std::vector<CategoryName>> category_list;
};

/// One sampled model response (y_i = reasoning trace + predicted category).
/// format_ok implies both reasoning and predicted_category are present.
struct RolloutRecord {
  ImageRef image;
  int rollout_index = 0;
  std::string raw_text;
  std::optional<std::string> reasoning;
  std::optional<CategoryName> predicted_category;
  bool format_ok = false;
};

/// Builds a record from raw model text, parsing tags and normalizing the answer.
RolloutRecord make_rollout(const ImageRef& image, int rollout_index, std::string raw_text);

}  // namespace divek
