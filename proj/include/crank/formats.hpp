#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crank/geometry.hpp"
#include "crank/tensor.hpp"

namespace crank {

// Strict parse failure carrying file and line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& message)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + message),
        file_(file),
        line_(line) {}
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// How ground-truth attribute integers map onto difficulty tags. By default
// the attribute at index 0 is read through {0: easy, 1: medium, 2: hard};
// boxes without attributes fall back to empirical height terciles over the
// whole file.
struct DifficultyDerivation {
  int attr_index = 0;
  std::vector<Difficulty> table = {Difficulty::kEasy, Difficulty::kMedium,
                                   Difficulty::kHard};
};

// Annotation text format, one block per image:
//   <image id>
//   <box count>
//   x y w h [attr ...]        (one line per box, %.6f fields)
// Image dimensions are not part of the format; the caller supplies the frame
// size that applies to every image in the file.
std::vector<GroundTruthImage> parse_annotations(
    const std::string& path, double frame_width, double frame_height,
    const DifficultyDerivation& derivation = {});
void write_annotations(const std::string& path,
                       const std::vector<GroundTruthImage>& gts);

// Detection dump format, one block per image:
//   <image id>
//   <detection count>
//   x y w h score             (%.6f fields; scores must lie in [0,1])
// Scores are written with 6 decimal digits: neighbor confidences in this
// problem differ by ~1e-4, so 1e-6 granularity preserves every ordering.
std::vector<DetectionSet> parse_detections(const std::string& path,
                                           double frame_width, double frame_height);
void write_detections(const std::string& path, const std::vector<DetectionSet>& sets,
                      ScoreField field);

// Versioned binary container of per-image feature grids ("CRFT"):
//   u32 version, u32 image count, then per image: u16 id length + id bytes,
//   u32 channels/height/width, row-major f64 payload (little-endian).
void write_features(const std::string& path,
                    const std::vector<std::pair<std::string, Tensor>>& features);
std::vector<std::pair<std::string, Tensor>> read_features(const std::string& path);

}  // namespace crank
