#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "automiseg/core_types.hpp"
#include "automiseg/errors.hpp"

namespace automiseg {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingAsset("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& line : lines) out << line << '\n';
}

}  // namespace

std::vector<std::string> parse_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> parse_classes(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& line : parse_lines(text)) {
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      auto item = trim(rest.substr(0, comma));
      if (!item.empty()) out.push_back(std::move(item));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  return out;
}

void TaskDefinition::validate() const {
  if (target.empty()) throw InvalidArgument("task target is empty");
  if (grounding_sentences.empty()) throw MissingAsset("task has no grounding sentences");
  if (descriptors.empty()) throw MissingAsset("task has no descriptors");
  const auto n_bg = std::count(contrastive_classes.begin(), contrastive_classes.end(),
                               std::string(kBackgroundClass));
  if (n_bg != 1) {
    throw MissingBackgroundClass("contrastive classes must contain \"background\" exactly once");
  }
}

TaskDefinition load_task(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("task file " + path.string() + ": " + e.what());
  }
  const fs::path dir = path.parent_path();
  auto field = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) {
      throw MissingAsset("task file " + path.string() + " lacks \"" + key + "\"");
    }
    return j[key].get<std::string>();
  };

  TaskDefinition task;
  task.target = field("target");
  task.whole = field("whole");
  task.grounding_sentences = parse_lines(read_text(resolve(dir, field("grounding_sentences_path"))));
  task.contrastive_classes = parse_classes(read_text(resolve(dir, field("classes_path"))));
  task.descriptors = parse_lines(read_text(resolve(dir, field("descriptors_path"))));

  const auto n_bg = std::count(task.contrastive_classes.begin(), task.contrastive_classes.end(),
                               std::string(kBackgroundClass));
  if (n_bg == 0) task.contrastive_classes.emplace_back(kBackgroundClass);
  task.validate();
  return task;
}

void save_task(const fs::path& path, const TaskDefinition& task) {
  const fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  const std::string stem = path.stem().string();
  const std::string sentences = stem + "_grounding.txt";
  const std::string classes = stem + "_classes.txt";
  const std::string descriptors = stem + "_descriptors.txt";

  write_lines(dir / sentences, task.grounding_sentences);
  std::vector<std::string> generated;
  for (const auto& c : task.contrastive_classes) {
    if (c != kBackgroundClass) generated.push_back(c);
  }
  std::string joined;
  for (std::size_t i = 0; i < generated.size(); ++i) joined += (i ? ", " : "") + generated[i];
  write_lines(dir / classes, {joined});
  write_lines(dir / descriptors, task.descriptors);

  nlohmann::json j{{"target", task.target},
                   {"whole", task.whole},
                   {"grounding_sentences_path", sentences},
                   {"classes_path", classes},
                   {"descriptors_path", descriptors}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace automiseg
