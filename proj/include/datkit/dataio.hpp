#pragma once

// Frames, annotations and on-disk sequences.
//
// Frames are 8-bit grayscale rasters stored as binary PGM ("P5"). Color
// PPM ("P6") input is accepted and reduced to gray with the integer
// luminance (77 R + 150 G + 29 B) >> 8. Annotations live in a CSV file
// with header `frame,category,x,y,w,h`, pixel units, origin top-left.
//
// A sequence directory holds `frame_%06d.pgm` files numbered from zero,
// an `annotations.csv`, and optionally a `sequence.json` with ids.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "datkit/core.hpp"
#include "datkit/error.hpp"
#include "datkit/text.hpp"

namespace datkit {

struct Frame {
  int width = 0;
  int height = 0;
  std::size_t index = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  Frame() = default;
  Frame(int w, int h, std::size_t idx = 0, std::uint8_t fill = 0)
      : width(w), height(h), index(idx),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  bool valid() const noexcept {
    return width >= 1 && height >= 1 &&
           pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  std::uint8_t at(int x, int y) const noexcept {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  std::uint8_t& at(int x, int y) noexcept {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Canvas {
  int width = 720;
  int height = 405;

  friend bool operator==(const Canvas&, const Canvas&) = default;
};

// ---------------------------------------------------------------------------
// Pixmaps

namespace detail {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments, then reads a decimal field.
  long read_number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw FormatError(std::string("pixmap truncated in header field '") + field + "'");
    long v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000L) throw FormatError(std::string("pixmap header field '") + field + "' out of range");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw FormatError(std::string("pixmap header field '") + field + "' is not a number");
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void expect_single_space(const char* field) {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_]))
      throw FormatError(std::string("pixmap header field '") + field + "' not followed by whitespace");
    ++pos_;
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  static bool is_space(std::uint8_t c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  }
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;  // after the magic
};

}  // namespace detail

inline Frame decode_pixmap(std::span<const std::uint8_t> bytes, std::size_t index = 0) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw FormatError("pixmap header field 'magic' must be P5 or P6");
  const bool color = bytes[1] == '6';
  detail::HeaderReader reader(bytes);
  const long w = reader.read_number("width");
  const long h = reader.read_number("height");
  const long maxval = reader.read_number("maxval");
  if (w < 1) throw FormatError("pixmap header field 'width' must be >= 1");
  if (h < 1) throw FormatError("pixmap header field 'height' must be >= 1");
  if (maxval != 255) throw FormatError("pixmap header field 'maxval' must be 255, got " + std::to_string(maxval));
  reader.expect_single_space("maxval");

  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const std::size_t channels = color ? 3 : 1;
  const std::size_t offset = reader.position();
  if (bytes.size() - offset < count * channels)
    throw FormatError("pixmap payload truncated: expected " + std::to_string(count * channels) +
                      " bytes, got " + std::to_string(bytes.size() - offset));

  Frame f(static_cast<int>(w), static_cast<int>(h), index);
  if (!color) {
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(offset), count, f.pixels.begin());
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned r = bytes[offset + 3 * i];
      const unsigned g = bytes[offset + 3 * i + 1];
      const unsigned b = bytes[offset + 3 * i + 2];
      f.pixels[i] = static_cast<std::uint8_t>((77 * r + 150 * g + 29 * b) >> 8);
    }
  }
  return f;
}

inline std::string pixmap_header(int width, int height) {
  return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

/// Canonical P5 encoding.
inline std::vector<std::uint8_t> encode_pixmap(const Frame& frame) {
  const std::string header = pixmap_header(frame.width, frame.height);
  std::vector<std::uint8_t> out;
  out.reserve(header.size() + frame.pixels.size());
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), frame.pixels.begin(), frame.pixels.end());
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a sibling temporary and renames, so readers never see a
/// partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Annotations

struct AnnotationRecord {
  std::size_t frame_index = 0;
  Category category = Category::L;
  BoundingBox box;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

inline constexpr std::string_view kAnnotationHeader = "frame,category,x,y,w,h";

inline void sort_annotations(std::vector<AnnotationRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
    return static_cast<int>(a.category) < static_cast<int>(b.category);
  });
}

/// Parses annotation CSV. Records come back sorted by (frame, category).
/// Line numbers in errors are 1-based and count the header.
inline std::vector<AnnotationRecord> parse_annotations(std::string_view csv) {
  const auto rows = text::lines(csv);
  if (rows.empty() || text::trim(rows[0]) != kAnnotationHeader)
    throw ParseError(std::string("expected header '") + std::string(kAnnotationHeader) + "'", 1);

  std::vector<AnnotationRecord> out;
  std::set<std::pair<std::size_t, Category>> camera_wearer;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (text::trim(rows[i]).empty()) continue;
    const auto fields = text::split(rows[i], ',');
    if (fields.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(fields.size()), line_no);

    const auto frame = text::parse_int(fields[0]);
    if (!frame) throw ParseError("non-numeric frame '" + std::string(fields[0]) + "'", line_no);
    if (*frame < 0) throw ParseError("negative frame index", line_no);
    const auto category = category_from_string(fields[1]);
    if (!category) throw ParseError("unknown category '" + std::string(fields[1]) + "'", line_no);

    double v[4];
    static constexpr const char* names[4] = {"x", "y", "w", "h"};
    for (int k = 0; k < 4; ++k) {
      const auto parsed = text::parse_double(fields[2 + k]);
      if (!parsed || !std::isfinite(*parsed))
        throw ParseError(std::string("non-numeric ") + names[k] + " '" + std::string(fields[2 + k]) + "'", line_no);
      v[k] = *parsed;
    }
    if (v[2] <= 0.0 || v[3] <= 0.0) throw ParseError("box dimensions must be positive", line_no);

    AnnotationRecord rec{static_cast<std::size_t>(*frame), *category, {v[0], v[1], v[2], v[3]}};
    if (rec.category == Category::L || rec.category == Category::R) {
      if (!camera_wearer.emplace(rec.frame_index, rec.category).second)
        throw ParseError("duplicate " + to_string(rec.category) + " record for frame " +
                             std::to_string(rec.frame_index),
                         line_no);
    }
    out.push_back(rec);
  }
  sort_annotations(out);
  return out;
}

inline std::string emit_annotations(std::vector<AnnotationRecord> records) {
  sort_annotations(records);
  std::string out(kAnnotationHeader);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.frame_index);
    out += ',';
    out += to_char(r.category);
    for (double v : {r.box.x, r.box.y, r.box.w, r.box.h}) {
      out += ',';
      out += text::format_double(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequences

/// An ordered run of frames plus ground truth. Frames are produced on
/// demand by a loader so that a reader walking the sequence holds at most
/// one decoded frame at a time.
class FrameSequence {
 public:
  using Loader = std::function<Frame(std::size_t)>;

  FrameSequence(std::size_t frame_count, Loader loader, std::vector<AnnotationRecord> annotations,
                Canvas canvas, std::string participant_id = {}, std::string sequence_id = {})
      : frame_count_(frame_count),
        loader_(std::move(loader)),
        annotations_(std::move(annotations)),
        canvas_(canvas),
        participant_id_(std::move(participant_id)),
        sequence_id_(std::move(sequence_id)) {
    sort_annotations(annotations_);
  }

  static FrameSequence in_memory(std::vector<Frame> frames, std::vector<AnnotationRecord> annotations,
                                 Canvas canvas, std::string participant_id = {},
                                 std::string sequence_id = {}) {
    auto shared = std::make_shared<const std::vector<Frame>>(std::move(frames));
    const std::size_t n = shared->size();
    return FrameSequence(
        n, [shared](std::size_t i) { return (*shared)[i]; }, std::move(annotations), canvas,
        std::move(participant_id), std::move(sequence_id));
  }

  std::size_t size() const noexcept { return frame_count_; }
  const Canvas& canvas() const noexcept { return canvas_; }
  const std::vector<AnnotationRecord>& annotations() const noexcept { return annotations_; }
  const std::string& participant_id() const noexcept { return participant_id_; }
  const std::string& sequence_id() const noexcept { return sequence_id_; }

  Frame load(std::size_t i) const {
    if (i >= frame_count_) throw ContractViolation("frame " + std::to_string(i) + " out of range");
    Frame f = loader_(i);
    f.index = i;
    return f;
  }

  /// Per-frame ground truth for one category (first record wins for O/N).
  std::vector<std::optional<BoundingBox>> ground_truth(Category category) const {
    std::vector<std::optional<BoundingBox>> gt(frame_count_);
    for (const auto& r : annotations_) {
      if (r.category == category && r.frame_index < frame_count_ && !gt[r.frame_index])
        gt[r.frame_index] = r.box;
    }
    return gt;
  }

 private:
  std::size_t frame_count_;
  Loader loader_;
  std::vector<AnnotationRecord> annotations_;
  Canvas canvas_;
  std::string participant_id_;
  std::string sequence_id_;
};

inline std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu.pgm", index);
  return buf;
}

/// Checks annotation frame range and canvas containment.
inline void validate_annotations(const std::vector<AnnotationRecord>& annotations, std::size_t frame_count,
                                 const Canvas& canvas) {
  constexpr double kSlack = 1e-6;
  for (const auto& r : annotations) {
    if (r.frame_index >= frame_count)
      throw ValidationError("annotation references frame " + std::to_string(r.frame_index) + " but sequence has " +
                            std::to_string(frame_count) + " frames");
    if (r.box.x < -kSlack || r.box.y < -kSlack || r.box.right() > canvas.width + kSlack ||
        r.box.bottom() > canvas.height + kSlack)
      throw ValidationError("annotation for frame " + std::to_string(r.frame_index) + " lies outside the " +
                            std::to_string(canvas.width) + "x" + std::to_string(canvas.height) + " canvas");
  }
}

/// Opens a sequence directory. The manifest (file numbering, annotation
/// ranges, frame size) is validated eagerly; pixels are decoded lazily.
inline FrameSequence open_sequence(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  const auto ann_path = dir / "annotations.csv";
  if (!fs::exists(ann_path)) throw ValidationError("missing annotations file " + ann_path.string());

  std::set<std::size_t> indices;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() == 16 && name.starts_with("frame_") && name.ends_with(".pgm")) {
      if (auto idx = text::parse_int(std::string_view(name).substr(6, 6)); idx && *idx >= 0)
        indices.insert(static_cast<std::size_t>(*idx));
    }
  }
  const std::size_t count = indices.empty() ? 0 : *indices.rbegin() + 1;
  if (indices.size() != count) {
    std::string missing;
    std::size_t listed = 0;
    for (std::size_t i = 0; i < count; ++i) {
      if (indices.count(i)) continue;
      if (listed++ < 20) missing += (missing.empty() ? "" : ",") + std::to_string(i);
    }
    if (listed > 20) missing += ",...";
    throw ValidationError("gap in frame numbering; missing indices: " + missing);
  }

  Canvas canvas;
  std::string participant_id;
  std::string sequence_id;
  const auto meta_path = dir / "sequence.json";
  if (fs::exists(meta_path)) {
    try {
      const auto meta = nlohmann::json::parse(read_file_text(meta_path));
      participant_id = meta.value("participant_id", "");
      sequence_id = meta.value("sequence_id", "");
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("invalid sequence.json: " + std::string(e.what()));
    }
  }
  if (count > 0) {
    const Frame first = decode_pixmap(read_file_bytes(dir / frame_filename(0)));
    canvas = {first.width, first.height};
  }

  auto annotations = parse_annotations(read_file_text(ann_path));
  validate_annotations(annotations, count, canvas);

  const Canvas expected = canvas;
  auto loader = [dir, expected](std::size_t i) {
    Frame f = decode_pixmap(read_file_bytes(dir / frame_filename(i)), i);
    if (f.width != expected.width || f.height != expected.height)
      throw ValidationError("frame " + std::to_string(i) + " has size " + std::to_string(f.width) + "x" +
                            std::to_string(f.height) + ", expected " + std::to_string(expected.width) + "x" +
                            std::to_string(expected.height));
    return f;
  };
  return FrameSequence(count, std::move(loader), std::move(annotations), canvas, std::move(participant_id),
                       std::move(sequence_id));
}

/// Materializes a sequence directory (frames, annotations.csv, sequence.json).
inline void write_sequence(const std::filesystem::path& dir, const FrameSequence& seq) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.size(); ++i) write_file_atomic(dir / frame_filename(i), encode_pixmap(seq.load(i)));
  write_file_atomic(dir / "annotations.csv", emit_annotations(seq.annotations()));
  nlohmann::ordered_json meta;
  meta["participant_id"] = seq.participant_id();
  meta["sequence_id"] = seq.sequence_id();
  meta["canvas"] = {seq.canvas().width, seq.canvas().height};
  meta["frames"] = seq.size();
  write_file_atomic(dir / "sequence.json", meta.dump(2) + "\n");
}

}  // namespace datkit
