#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "linematch/datagen.hpp"
#include "linematch/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace linematch {

namespace {

json lines_to_json(const std::vector<LineSegment>& lines) {
  json arr = json::array();
  for (const auto& s : lines) arr.push_back({s.p0.x(), s.p0.y(), s.p1.x(), s.p1.y()});
  return arr;
}

std::vector<LineSegment> lines_from_json(const json& arr, const char* key, std::size_t line) {
  if (!arr.is_array()) throw ParseError(std::string("'") + key + "' must be an array", line);
  std::vector<LineSegment> out;
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 4) throw ParseError(std::string("'") + key + "' entries must be [x0,y0,x1,y1]", line);
    for (const auto& v : e)
      if (!v.is_number()) throw ParseError(std::string("'") + key + "' coordinates must be numbers", line);
    out.emplace_back(e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>());
  }
  return out;
}

std::vector<int> indices_from_json(const json& arr, const char* key, std::size_t line) {
  if (!arr.is_array()) throw ParseError(std::string("gt '") + key + "' must be an array", line);
  std::vector<int> out;
  for (const auto& v : arr) {
    if (!v.is_number_integer()) throw ParseError(std::string("gt '") + key + "' must hold integers", line);
    out.push_back(v.get<int>());
  }
  return out;
}

const json& require(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing key '") + key + "'", line);
  return *it;
}

void load_images(ImagePairRecord& rec, const fs::path& dir) {
  for (auto [path, mat] : {std::pair{&rec.image_a_path, &rec.image_a}, std::pair{&rec.image_b_path, &rec.image_b}}) {
    const fs::path full = dir / *path;
    *mat = cv::imread(full.string(), cv::IMREAD_COLOR);
    if (mat->empty()) throw IoError("cannot read image " + full.string());
  }
}

}  // namespace

json record_to_json(const ImagePairRecord& r) {
  json pairs = json::array();
  for (const auto& [i, j] : r.gt.pairs) pairs.push_back({i, j});
  return {{"id", r.id},
          {"image_a", r.image_a_path},
          {"image_b", r.image_b_path},
          {"lines_a", lines_to_json(r.lines_a)},
          {"lines_b", lines_to_json(r.lines_b)},
          {"gt", {{"pairs", pairs}, {"unmatched_a", r.gt.unmatched_a}, {"unmatched_b", r.gt.unmatched_b}}},
          {"meta", r.meta}};
}

ImagePairRecord record_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError("record must be a JSON object", line);
  ImagePairRecord r;
  const json& id = require(j, "id", line);
  if (!id.is_string()) throw ParseError("'id' must be a string", line);
  r.id = id.get<std::string>();
  const json& ia = require(j, "image_a", line);
  const json& ib = require(j, "image_b", line);
  if (!ia.is_string() || !ib.is_string()) throw ParseError("image paths must be strings", line);
  r.image_a_path = ia.get<std::string>();
  r.image_b_path = ib.get<std::string>();
  r.lines_a = lines_from_json(require(j, "lines_a", line), "lines_a", line);
  r.lines_b = lines_from_json(require(j, "lines_b", line), "lines_b", line);
  const json& gt = require(j, "gt", line);
  if (!gt.is_object()) throw ParseError("'gt' must be an object", line);
  const json& pairs = require(gt, "pairs", line);
  if (!pairs.is_array()) throw ParseError("gt 'pairs' must be an array", line);
  for (const auto& p : pairs) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
      throw ParseError("gt pairs must be [i, j] integer arrays", line);
    r.gt.pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
  }
  r.gt.unmatched_a = indices_from_json(require(gt, "unmatched_a", line), "unmatched_a", line);
  r.gt.unmatched_b = indices_from_json(require(gt, "unmatched_b", line), "unmatched_b", line);
  if (auto it = j.find("meta"); it != j.end()) r.meta = *it;
  try {
    r.gt.validate(static_cast<int>(r.lines_a.size()), static_cast<int>(r.lines_b.size()));
  } catch (const std::exception& e) {
    throw ParseError(e.what(), line);
  }
  return r;
}

void write_manifest(const std::vector<ImagePairRecord>& records, const fs::path& path) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& rec : records) {
    ImagePairRecord copy_paths;
    copy_paths.image_a_path = rec.image_a_path.empty() ? "images/" + rec.id + "_a.png" : rec.image_a_path;
    copy_paths.image_b_path = rec.image_b_path.empty() ? "images/" + rec.id + "_b.png" : rec.image_b_path;
    if (!rec.image_a.empty() || !rec.image_b.empty()) fs::create_directories(dir / "images", ec);
    if (!rec.image_a.empty() && !cv::imwrite((dir / copy_paths.image_a_path).string(), rec.image_a))
      throw IoError("cannot write " + (dir / copy_paths.image_a_path).string());
    if (!rec.image_b.empty() && !cv::imwrite((dir / copy_paths.image_b_path).string(), rec.image_b))
      throw IoError("cannot write " + (dir / copy_paths.image_b_path).string());
    json j = record_to_json(rec);
    j["image_a"] = copy_paths.image_a_path;
    j["image_b"] = copy_paths.image_b_path;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ImagePairRecord> read_manifest(const fs::path& path, bool images) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");

  std::vector<ImagePairRecord> out;
  std::size_t start = 0, line = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line;
    const std::string_view row(text.data() + start, end - start);
    start = end + 1;
    if (row.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j = json::parse(row.begin(), row.end(), nullptr, false);
    if (j.is_discarded()) throw ParseError("malformed JSON", line);
    out.push_back(record_from_json(j, line));
    if (images) load_images(out.back(), dir);
  }
  return out;
}

struct ManifestReader::Impl {
  std::ifstream in;
  fs::path dir;
  bool images = true;
  std::size_t line = 0;
};

ManifestReader::ManifestReader(const fs::path& path, bool images) : impl_(std::make_unique<Impl>()) {
  impl_->in.open(path, std::ios::binary);
  if (!impl_->in) throw IoError("cannot open manifest " + path.string());
  impl_->dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  impl_->images = images;
}

ManifestReader::~ManifestReader() = default;

bool ManifestReader::next(ImagePairRecord& record) {
  std::string row;
  while (std::getline(impl_->in, row)) {
    ++impl_->line;
    if (row.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(row, nullptr, false);
    if (j.is_discarded()) throw ParseError("malformed JSON", impl_->line);
    record = record_from_json(j, impl_->line);
    if (impl_->images) load_images(record, impl_->dir);
    return true;
  }
  return false;
}

}  // namespace linematch
