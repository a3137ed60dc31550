#include "divek/records.hpp"

#include <fstream>
#include <sstream>

#include "divek/errors.hpp"

namespace divek {

Json rollout_to_json(const RolloutRecord& r) {
  Json j;
  j["image_id"] = r.image.id;
  j["rollout_index"] = r.rollout_index;
  j["raw_text"] = r.raw_text;
  j["reasoning"] = r.reasoning ? Json(*r.reasoning) : Json(nullptr);
  j["predicted_category"] = r.predicted_category ? Json(r.predicted_category->raw) : Json(nullptr);
  j["format_ok"] = r.format_ok;
  return j;
}

RolloutRecord rollout_from_json(const Json& j) {
  try {
    RolloutRecord r;
    r.image.id = j.at("image_id").get<std::string>();
    r.rollout_index = j.at("rollout_index").get<int>();
    r.raw_text = j.at("raw_text").get<std::string>();
    if (j.contains("reasoning") && !j["reasoning"].is_null()) {
      r.reasoning = j["reasoning"].get<std::string>();
    }
    if (j.contains("predicted_category") && !j["predicted_category"].is_null()) {
      r.predicted_category = normalize_category(j["predicted_category"].get<std::string>());
    }
    r.format_ok = j.at("format_ok").get<bool>();
    return r;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed rollout record: ") + e.what());
  }
}

JsonlContents read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  JsonlContents out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool last = nl == std::string::npos;
    const std::string line = text.substr(pos, last ? std::string::npos : nl - pos);
    pos = last ? text.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.rows.push_back(Json::parse(line));
      if (last) out.truncated_tail = true;  // complete JSON but no newline
    } catch (const Json::parse_error&) {
      if (last) {
        out.truncated_tail = true;
        break;
      }
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": invalid JSON line");
    }
  }
  return out;
}

std::string to_jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  write_text_file(path, to_jsonl(rows));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << contents;
}

}  // namespace divek
