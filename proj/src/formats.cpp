#include "crank/formats.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "io_util.hpp"

namespace crank {

namespace {

struct LineReader {
  std::ifstream stream;
  std::string path;
  std::size_t line_no = 0;

  explicit LineReader(const std::string& p) : stream(p), path(p) {
    if (!stream) throw std::runtime_error("cannot open " + p);
  }

  bool next(std::string& out) {
    if (!std::getline(stream, out)) return false;
    ++line_no;
    if (!out.empty() && out.back() == '\r') out.pop_back();
    return true;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(path, line_no, message);
  }
};

// Strict whitespace-separated token scan; the whole line must be consumed.
std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_double(LineReader& r, const std::string& token, const char* what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || errno != 0) {
    r.fail(std::string("invalid ") + what + " '" + token + "'");
  }
  return v;
}

long parse_long(LineReader& r, const std::string& token, const char* what) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(token.c_str(), &end, 10);
  if (end != token.c_str() + token.size() || errno != 0) {
    r.fail(std::string("invalid ") + what + " '" + token + "'");
  }
  return v;
}

std::size_t parse_count(LineReader& r, const std::string& line) {
  const auto fields = split_fields(line);
  if (fields.size() != 1) r.fail("expected a single count field");
  const long v = parse_long(r, fields[0], "count");
  if (v < 0) r.fail("negative count");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<GroundTruthImage> parse_annotations(const std::string& path,
                                                double frame_width, double frame_height,
                                                const DifficultyDerivation& derivation) {
  if (!(frame_width > 0.0) || !(frame_height > 0.0)) {
    throw std::invalid_argument("parse_annotations: frame dimensions must be positive");
  }
  LineReader reader(path);
  std::vector<GroundTruthImage> out;
  std::vector<std::pair<std::size_t, std::size_t>> pending;  // (image, box) lacking attrs
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) reader.fail("empty image id line");
    GroundTruthImage gt;
    gt.image_id = line;
    gt.image_width = frame_width;
    gt.image_height = frame_height;
    if (!reader.next(line)) reader.fail("unexpected end of file: missing count");
    const std::size_t count = parse_count(reader, line);
    for (std::size_t b = 0; b < count; ++b) {
      if (!reader.next(line)) {
        reader.fail("unexpected end of file: expected " + std::to_string(count) +
                    " box lines, got " + std::to_string(b));
      }
      const auto fields = split_fields(line);
      if (fields.size() < 4) reader.fail("expected at least 4 fields (x y w h)");
      double vals[4];
      for (int i = 0; i < 4; ++i) {
        vals[i] = parse_double(reader, fields[static_cast<std::size_t>(i)], "coordinate");
      }
      try {
        gt.boxes.emplace_back(vals[0], vals[1], vals[2], vals[3]);
      } catch (const std::invalid_argument& e) {
        reader.fail(e.what());
      }
      if (fields.size() > 4) {
        std::vector<long> attrs;
        for (std::size_t i = 4; i < fields.size(); ++i) {
          attrs.push_back(parse_long(reader, fields[i], "attribute"));
        }
        const std::size_t ai = static_cast<std::size_t>(derivation.attr_index);
        if (ai >= attrs.size()) reader.fail("difficulty attribute index out of range");
        const long tag = attrs[ai];
        if (tag < 0 || tag >= static_cast<long>(derivation.table.size())) {
          reader.fail("unknown difficulty attribute value " + std::to_string(tag));
        }
        gt.difficulty.push_back(derivation.table[static_cast<std::size_t>(tag)]);
      } else {
        gt.difficulty.push_back(Difficulty::kHard);  // placeholder, filled below
        pending.emplace_back(out.size(), gt.boxes.size() - 1);
      }
    }
    out.push_back(std::move(gt));
  }

  if (!pending.empty()) {
    // No tags in the file for these boxes: derive from the empirical height
    // terciles (size-driven difficulty, large boxes easy).
    std::vector<double> heights;
    for (const auto& gt : out) {
      for (const auto& b : gt.boxes) heights.push_back(b.h);
    }
    std::sort(heights.begin(), heights.end());
    const std::size_t n = heights.size();
    const double t1 = heights[n / 3 == 0 ? 0 : n / 3 - 1];
    const double t2 = heights[2 * n / 3 == 0 ? 0 : 2 * n / 3 - 1];
    for (const auto& [img, box] : pending) {
      const double h = out[img].boxes[box].h;
      out[img].difficulty[box] =
          h > t2 ? Difficulty::kEasy : (h > t1 ? Difficulty::kMedium : Difficulty::kHard);
    }
  }
  return out;
}

void write_annotations(const std::string& path, const std::vector<GroundTruthImage>& gts) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[160];
  for (const auto& gt : gts) {
    if (gt.difficulty.size() != gt.boxes.size()) {
      throw std::invalid_argument("write_annotations: difficulty list length mismatch for " +
                                  gt.image_id);
    }
    os << gt.image_id << "\n" << gt.boxes.size() << "\n";
    for (std::size_t b = 0; b < gt.boxes.size(); ++b) {
      const auto& box = gt.boxes[b];
      std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %.6f %d\n", box.x, box.y, box.w,
                    box.h, static_cast<int>(gt.difficulty[b]));
      os << buf;
    }
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<DetectionSet> parse_detections(const std::string& path, double frame_width,
                                           double frame_height) {
  if (!(frame_width > 0.0) || !(frame_height > 0.0)) {
    throw std::invalid_argument("parse_detections: frame dimensions must be positive");
  }
  LineReader reader(path);
  std::vector<DetectionSet> out;
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) reader.fail("empty image id line");
    DetectionSet ds;
    ds.image_id = line;
    ds.image_width = frame_width;
    ds.image_height = frame_height;
    if (!reader.next(line)) reader.fail("unexpected end of file: missing count");
    const std::size_t count = parse_count(reader, line);
    for (std::size_t b = 0; b < count; ++b) {
      if (!reader.next(line)) {
        reader.fail("unexpected end of file: expected " + std::to_string(count) +
                    " detection lines, got " + std::to_string(b));
      }
      const auto fields = split_fields(line);
      if (fields.size() != 5) reader.fail("expected 5 fields (x y w h score)");
      double vals[5];
      for (int i = 0; i < 5; ++i) {
        vals[i] = parse_double(reader, fields[static_cast<std::size_t>(i)], "field");
      }
      if (vals[4] < 0.0 || vals[4] > 1.0) {
        reader.fail("score out of range [0,1]");
      }
      try {
        ds.detections.emplace_back(BoundingBox(vals[0], vals[1], vals[2], vals[3]), vals[4]);
      } catch (const std::invalid_argument& e) {
        reader.fail(e.what());
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

void write_detections(const std::string& path, const std::vector<DetectionSet>& sets,
                      ScoreField field) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[160];
  for (const auto& ds : sets) {
    os << ds.image_id << "\n" << ds.detections.size() << "\n";
    for (const auto& d : ds.detections) {
      const double score = score_of(d, field);
      if (score < 0.0 || score > 1.0) {
        throw std::invalid_argument("write_detections: score out of [0,1] in " + ds.image_id);
      }
      std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %.6f %.6f\n", d.box.x, d.box.y,
                    d.box.w, d.box.h, score);
      os << buf;
    }
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

namespace {
constexpr char kFeatureMagic[4] = {'C', 'R', 'F', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;
}  // namespace

void write_features(const std::string& path,
                    const std::vector<std::pair<std::string, Tensor>>& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  detail::put_bytes(os, kFeatureMagic, 4);
  detail::put_le<std::uint32_t>(os, kFeatureVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(features.size()));
  for (const auto& [id, tensor] : features) {
    if (tensor.shape.size() != 3) {
      throw std::invalid_argument("write_features: expected [c][h][w] tensors");
    }
    detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(id.size()));
    detail::put_bytes(os, id.data(), id.size());
    for (int d : tensor.shape) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : tensor.data) detail::put_le<double>(os, v);
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<std::pair<std::string, Tensor>> read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kFeatureMagic, 4)) {
    throw std::runtime_error("feature file: bad magic in " + path);
  }
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kFeatureVersion) {
    throw std::runtime_error("feature file: unsupported version " + std::to_string(version));
  }
  const auto count = detail::get_le<std::uint32_t>(is);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto id_len = detail::get_le<std::uint16_t>(is);
    std::string id(id_len, '\0');
    if (!is.read(id.data(), id_len)) throw std::runtime_error("feature file: truncated");
    std::vector<int> shape(3);
    for (int& d : shape) d = static_cast<int>(detail::get_le<std::uint32_t>(is));
    Tensor t(shape);
    for (double& v : t.data) v = detail::get_le<double>(is);
    out.emplace_back(std::move(id), std::move(t));
  }
  return out;
}

}  // namespace crank
