#include "reefloop/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "reefloop/text.hpp"

namespace fs = std::filesystem;

namespace reefloop::dataset {

namespace {

constexpr std::array<std::string_view, kAttributeCount> kCodes = {
    "SV", "ARC", "LR", "PO", "DB", "SO", "MW", "SB", "CR", "SG", "IS", "AL", "PL"};

constexpr double kRatioLow = 0.5;
constexpr double kRatioHigh = 2.0;
constexpr double kLowResolutionArea = 1000.0;

bool outside_ratio_band(double ratio) { return ratio < kRatioLow || ratio > kRatioHigh; }

std::string where(const fs::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line);
}

}  // namespace

std::string_view attribute_code(Attribute a) { return kCodes[static_cast<std::size_t>(a)]; }

std::optional<Attribute> parse_attribute(std::string_view code) {
  for (std::size_t i = 0; i < kAttributeCount; ++i)
    if (kCodes[i] == code) return kAllAttributes[i];
  return std::nullopt;
}

bool is_auto_attribute(Attribute a) {
  return a == Attribute::SV || a == Attribute::ARC || a == Attribute::LR;
}

std::vector<std::string> AttributeSet::violations() const {
  std::vector<std::string> out;
  if (get(Attribute::AL) && get(Attribute::PL)) out.emplace_back("AL and PL are mutually exclusive");
  for (Attribute sub : {Attribute::CR, Attribute::SG, Attribute::IS}) {
    if (get(sub) && !get(Attribute::SB))
      out.push_back(std::string(attribute_code(sub)) + " requires SB");
  }
  return out;
}

fs::path SequenceRecord::frame_path(std::size_t index) const {
  if (!frame_dir) throw DatasetError("sequence " + id + " has no frames");
  char name[32];
  std::snprintf(name, sizeof(name), "%06zu.png", index);
  return *frame_dir / name;
}

Track interpolate_track(const KeyframeTrack& keyframes, std::size_t frame_count) {
  if (keyframes.empty()) throw DatasetError("keyframe list is empty");
  for (std::size_t i = 1; i < keyframes.size(); ++i) {
    if (keyframes[i].frame <= keyframes[i - 1].frame)
      throw DatasetError("keyframe indices must be strictly increasing");
  }
  if (keyframes.back().frame >= frame_count)
    throw DatasetError("keyframe index " + std::to_string(keyframes.back().frame) +
                       " beyond frame count " + std::to_string(frame_count));

  Track dense(frame_count);
  // Frames before the first keyframe hold it, mirroring the tail extension.
  for (std::size_t f = 0; f < keyframes.front().frame; ++f) dense[f] = keyframes.front().box;

  for (std::size_t k = 0; k + 1 < keyframes.size(); ++k) {
    const auto& [i, a] = keyframes[k];
    const auto& [j, b] = keyframes[k + 1];
    const double span = static_cast<double>(j - i);
    dense[i] = a;
    for (std::size_t f = i + 1; f < j; ++f) {
      const double t = static_cast<double>(f - i) / span;
      dense[f] = {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, a.w + (b.w - a.w) * t,
                  a.h + (b.h - a.h) * t};
    }
  }
  for (std::size_t f = keyframes.back().frame; f < frame_count; ++f) dense[f] = keyframes.back().box;
  return dense;
}

std::vector<std::string> keyframe_gap_warnings(const KeyframeTrack& keyframes) {
  std::vector<std::string> out;
  if (!keyframes.empty() && keyframes.front().frame != 0)
    out.push_back("first keyframe is at frame " + std::to_string(keyframes.front().frame) +
                  ", expected 0");
  for (std::size_t k = 1; k < keyframes.size(); ++k) {
    const std::size_t gap = keyframes[k].frame - keyframes[k - 1].frame;
    if (gap > kMaxKeyframeGap)
      out.push_back("keyframe gap of " + std::to_string(gap) + " frames after frame " +
                    std::to_string(keyframes[k - 1].frame));
  }
  return out;
}

AutoAttributes compute_auto_attributes(const Track& track) {
  AutoAttributes out;
  if (track.empty()) return out;
  const BBox& first = track.front();
  const double area0 = first.w * first.h;
  const double aspect0 = first.w / first.h;
  for (const BBox& b : track) {
    const double area = b.w * b.h;
    out.sv = out.sv || outside_ratio_band(area / area0);
    out.arc = out.arc || outside_ratio_band((b.w / b.h) / aspect0);
    out.lr = out.lr || area < kLowResolutionArea;
  }
  return out;
}

Track resample_timeline(const Track& track, double src_fps, double dst_fps) {
  if (!(src_fps > 0.0) || !(dst_fps > 0.0)) throw DatasetError("frame rates must be positive");
  if (dst_fps > src_fps) throw DatasetError("upsampling is not supported");
  if (track.empty()) return {};
  const double ratio = src_fps / dst_fps;
  const auto out_len = static_cast<std::size_t>(
      std::ceil(static_cast<double>(track.size()) * dst_fps / src_fps - 1e-9));
  Track out;
  out.reserve(out_len);
  for (std::size_t t = 0; t < out_len; ++t) {
    auto src = static_cast<std::size_t>(std::llround(static_cast<double>(t) * ratio));
    out.push_back(track[std::min(src, track.size() - 1)]);
  }
  return out;
}

Track scale_annotations(const Track& track, Resolution src, Resolution dst) {
  if (src.width <= 0 || src.height <= 0 || dst.width <= 0 || dst.height <= 0)
    throw DatasetError("resolutions must be positive");
  const double sx = static_cast<double>(dst.width) / src.width;
  const double sy = static_cast<double>(dst.height) / src.height;
  Track out;
  out.reserve(track.size());
  for (const BBox& b : track) out.push_back(scaled(b, sx, sy));
  return out;
}

// ---- on-disk format -------------------------------------------------------

BBox parse_box_line(std::string_view line) {
  const auto fields = text::split_numbers(line, ',');
  if (!fields || fields->size() != 4)
    throw DatasetError("malformed box line '" + std::string(line) + "'");
  return {(*fields)[0], (*fields)[1], (*fields)[2], (*fields)[3]};
}

std::string format_box_line(const BBox& b) {
  return text::format_double(b.x) + "," + text::format_double(b.y) + "," +
         text::format_double(b.w) + "," + text::format_double(b.h);
}

Track read_groundtruth(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetError("missing ground-truth file " + file.string());
  Track track;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      track.push_back(parse_box_line(line));
    } catch (const DatasetError& e) {
      throw DatasetError(where(file, n) + ": " + e.what());
    }
    if (!track.back().valid())
      throw DatasetError(where(file, n) + ": box must have positive width and height");
  }
  return track;
}

void write_groundtruth(const fs::path& file, const Track& track) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + file.string());
  for (const BBox& b : track) out << format_box_line(b) << '\n';
}

KeyframeTrack read_keyframes(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetError("cannot open " + file.string());
  KeyframeTrack out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = text::split_numbers(line, ',');
    if (!fields || fields->size() != 5 || (*fields)[0] < 0 ||
        (*fields)[0] != std::floor((*fields)[0]))
      throw DatasetError(where(file, n) + ": malformed keyframe line '" + line + "'");
    out.push_back({static_cast<std::size_t>((*fields)[0]),
                   {(*fields)[1], (*fields)[2], (*fields)[3], (*fields)[4]}});
  }
  return out;
}

void write_keyframes(const fs::path& file, const KeyframeTrack& keyframes) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + file.string());
  for (const auto& k : keyframes) out << k.frame << ',' << format_box_line(k.box) << '\n';
}

SequenceRecord load_sequence(const fs::path& dir, std::vector<std::string>& warnings) {
  SequenceRecord rec;
  const fs::path meta_path = dir / "meta.toml";
  toml::table meta;
  try {
    meta = toml::parse_file(meta_path.string());
  } catch (const toml::parse_error& e) {
    throw DatasetError("cannot parse " + meta_path.string() + ": " + std::string(e.description()));
  }

  rec.id = meta["id"].value_or(dir.filename().string());
  const auto fps = meta["fps"].value<double>();
  if (!fps) throw DatasetError(meta_path.string() + ": missing fps");
  rec.fps = *fps;
  const auto* res = meta["resolution"].as_array();
  if (!res || res->size() != 2 || !(*res)[0].value<int>() || !(*res)[1].value<int>())
    throw DatasetError(meta_path.string() + ": resolution must be [width, height]");
  rec.resolution = {*(*res)[0].value<int>(), *(*res)[1].value<int>()};
  rec.animal = meta["animal"].value_or(std::string{});
  rec.habitat = meta["habitat"].value_or(std::string{});
  rec.behavior = meta["behavior"].value_or(std::string{});

  if (rec.fps < kMinimumFps)
    throw DatasetError(rec.id + ": fps " + text::format_double(rec.fps) + " below minimum of 10");
  if (rec.resolution.width <= 0 || rec.resolution.height <= 0)
    throw DatasetError(rec.id + ": resolution must be positive");

  AutoAttributes stored;
  bool any_stored = false;
  if (const auto* attrs = meta["attributes"].as_table()) {
    for (const auto& [key, node] : *attrs) {
      const auto attr = parse_attribute(key.str());
      const auto flag = node.value<bool>();
      if (!attr || !flag)
        throw DatasetError(meta_path.string() + ": bad attribute entry '" + std::string(key.str()) + "'");
      switch (*attr) {
        case Attribute::SV: stored.sv = *flag; any_stored = true; break;
        case Attribute::ARC: stored.arc = *flag; any_stored = true; break;
        case Attribute::LR: stored.lr = *flag; any_stored = true; break;
        default: rec.attributes.set(*attr, *flag);
      }
    }
  }
  if (any_stored) rec.stored_auto = stored;
  for (const auto& v : rec.attributes.violations()) throw DatasetError(rec.id + ": " + v);

  rec.track = read_groundtruth(dir / "groundtruth.txt");
  if (rec.track.empty()) throw DatasetError(rec.id + ": ground truth is empty");
  if (const auto fc = meta["frame_count"].value<std::int64_t>();
      fc && static_cast<std::size_t>(*fc) != rec.track.size()) {
    throw DatasetError(rec.id + ": frame_count " + std::to_string(*fc) + " but ground truth has " +
                       std::to_string(rec.track.size()) + " boxes");
  }

  if (fs::exists(dir / "keyframes.txt")) {
    KeyframeTrack keys = read_keyframes(dir / "keyframes.txt");
    for (auto& w : keyframe_gap_warnings(keys)) warnings.push_back(rec.id + ": " + w);
    const Track dense = interpolate_track(keys, rec.track.size());
    for (std::size_t f = 0; f < dense.size(); ++f) {
      const BBox& a = dense[f];
      const BBox& b = rec.track[f];
      const double tol = 1e-6 * (1.0 + std::max({std::abs(a.x), std::abs(a.y), a.w, a.h}));
      if (std::abs(a.x - b.x) > tol || std::abs(a.y - b.y) > tol || std::abs(a.w - b.w) > tol ||
          std::abs(a.h - b.h) > tol) {
        throw DatasetError(rec.id + ": ground truth frame " + std::to_string(f) +
                           " differs from keyframe interpolation");
      }
    }
    rec.keyframes = std::move(keys);
  }

  const AutoAttributes computed = compute_auto_attributes(rec.track);
  rec.attributes.set(Attribute::SV, computed.sv);
  rec.attributes.set(Attribute::ARC, computed.arc);
  rec.attributes.set(Attribute::LR, computed.lr);
  rec.lr_at_standard_resolution =
      compute_auto_attributes(scale_annotations(rec.track, rec.resolution, kStandardResolution)).lr;
  if (rec.stored_auto && *rec.stored_auto != computed) {
    auto flag = [](std::string_view code, bool s, bool c) {
      return s == c ? std::string{}
                    : " " + std::string(code) + "(stored " + (s ? "true" : "false") +
                          ", computed " + (c ? "true" : "false") + ")";
    };
    warnings.push_back(rec.id + ": stored auto attributes disagree with computed:" +
                       flag("SV", rec.stored_auto->sv, computed.sv) +
                       flag("ARC", rec.stored_auto->arc, computed.arc) +
                       flag("LR", rec.stored_auto->lr, computed.lr));
  }

  if (fs::is_directory(dir / "frames")) rec.frame_dir = dir / "frames";
  return rec;
}

LoadResult load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " not found");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.toml")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  LoadResult out;
  for (const auto& d : dirs) out.sequences.push_back(load_sequence(d, out.warnings));
  return out;
}

void save_sequence(const fs::path& root, const SequenceRecord& rec) {
  const fs::path dir = root / rec.id;
  fs::create_directories(dir);
  std::ofstream meta(dir / "meta.toml", std::ios::trunc);
  if (!meta) throw DatasetError("cannot write " + (dir / "meta.toml").string());
  meta << "id = " << toml::value<std::string>(rec.id) << '\n'
       << "fps = " << text::format_toml_float(rec.fps) << '\n'
       << "resolution = [" << rec.resolution.width << ", " << rec.resolution.height << "]\n"
       << "frame_count = " << rec.track.size() << '\n'
       << "animal = " << toml::value<std::string>(rec.animal) << '\n'
       << "habitat = " << toml::value<std::string>(rec.habitat) << '\n'
       << "behavior = " << toml::value<std::string>(rec.behavior) << "\n\n"
       << "[attributes]\n";
  const AutoAttributes autos = rec.stored_auto.value_or(compute_auto_attributes(rec.track));
  for (Attribute a : kAllAttributes) {
    bool v = rec.attributes.get(a);
    if (a == Attribute::SV) v = autos.sv;
    if (a == Attribute::ARC) v = autos.arc;
    if (a == Attribute::LR) v = autos.lr;
    meta << attribute_code(a) << " = " << (v ? "true" : "false") << '\n';
  }
  write_groundtruth(dir / "groundtruth.txt", rec.track);
  if (rec.keyframes) write_keyframes(dir / "keyframes.txt", *rec.keyframes);
}

}  // namespace reefloop::dataset
