#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "reefloop/geometry.hpp"

namespace reefloop::dataset {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The thirteen benchmark attributes, in report order.
enum class Attribute {
  SV,   ///< scale variation (auto)
  ARC,  ///< aspect ratio change (auto)
  LR,   ///< low resolution (auto)
  PO,   ///< partial occlusion
  DB,   ///< deformation / blur
  SO,   ///< similar objects
  MW,   ///< midwater
  SB,   ///< seabed
  CR,   ///< coral reef
  SG,   ///< seagrass
  IS,   ///< inorganic structure
  AL,   ///< artificial lighting
  PL,   ///< poor lighting
};

inline constexpr std::size_t kAttributeCount = 13;
inline constexpr std::array<Attribute, kAttributeCount> kAllAttributes = {
    Attribute::SV, Attribute::ARC, Attribute::LR, Attribute::PO, Attribute::DB,
    Attribute::SO, Attribute::MW,  Attribute::SB, Attribute::CR, Attribute::SG,
    Attribute::IS, Attribute::AL,  Attribute::PL};

std::string_view attribute_code(Attribute a);
std::optional<Attribute> parse_attribute(std::string_view code);
bool is_auto_attribute(Attribute a);

class AttributeSet {
 public:
  bool get(Attribute a) const { return bits_[static_cast<std::size_t>(a)]; }
  void set(Attribute a, bool value = true) { bits_[static_cast<std::size_t>(a)] = value; }

  /// Empty when consistent; otherwise one message per violated rule
  /// (AL/PL exclusive, CR/SG/IS imply SB).
  std::vector<std::string> violations() const;

  friend bool operator==(const AttributeSet&, const AttributeSet&) = default;

 private:
  std::array<bool, kAttributeCount> bits_{};
};

struct AutoAttributes {
  bool sv = false;
  bool arc = false;
  bool lr = false;

  friend bool operator==(const AutoAttributes&, const AutoAttributes&) = default;
};

struct Resolution {
  int width = 0;
  int height = 0;

  friend bool operator==(const Resolution&, const Resolution&) = default;
};

inline constexpr Resolution kStandardResolution{854, 480};
inline constexpr double kMinimumFps = 10.0;
inline constexpr std::size_t kMaxKeyframeGap = 15;

struct Keyframe {
  std::size_t frame = 0;
  BBox box;
};

using KeyframeTrack = std::vector<Keyframe>;
using Track = std::vector<BBox>;

struct SequenceRecord {
  std::string id;
  double fps = 30.0;
  Resolution resolution;
  std::string animal;
  std::string habitat;
  std::string behavior;
  Track track;
  AttributeSet attributes;
  /// Auto flags as written in meta.toml, if any were written.
  std::optional<AutoAttributes> stored_auto;
  /// LR recomputed after scaling annotations to 854x480.
  bool lr_at_standard_resolution = false;
  std::optional<KeyframeTrack> keyframes;
  std::optional<std::filesystem::path> frame_dir;

  std::size_t frame_count() const { return track.size(); }
  std::filesystem::path frame_path(std::size_t index) const;
};

struct LoadResult {
  std::vector<SequenceRecord> sequences;
  std::vector<std::string> warnings;
};

/// Dense per-frame boxes from sparse keyframes. Keyframes are reproduced
/// exactly, interior frames are interpolated field by field, and frames after
/// the last keyframe hold its box.
Track interpolate_track(const KeyframeTrack& keyframes, std::size_t frame_count);

/// Keyframe gaps larger than the labelling cadence, as warning messages.
std::vector<std::string> keyframe_gap_warnings(const KeyframeTrack& keyframes);

AutoAttributes compute_auto_attributes(const Track& track);

/// Nearest-index decimation from src_fps to dst_fps (dst_fps <= src_fps).
Track resample_timeline(const Track& track, double src_fps, double dst_fps);

Track scale_annotations(const Track& track, Resolution src, Resolution dst);

// ---- on-disk format -------------------------------------------------------

/// Parses one "x,y,w,h" line.
BBox parse_box_line(std::string_view line);
std::string format_box_line(const BBox& b);

Track read_groundtruth(const std::filesystem::path& file);
void write_groundtruth(const std::filesystem::path& file, const Track& track);
KeyframeTrack read_keyframes(const std::filesystem::path& file);
void write_keyframes(const std::filesystem::path& file, const KeyframeTrack& keyframes);

SequenceRecord load_sequence(const std::filesystem::path& dir, std::vector<std::string>& warnings);
LoadResult load_dataset(const std::filesystem::path& root);

/// Writes meta.toml, groundtruth.txt and (if present) keyframes.txt into
/// `<root>/<record.id>/`. Frames are not touched.
void save_sequence(const std::filesystem::path& root, const SequenceRecord& record);

}  // namespace reefloop::dataset
