#pragma once

// Landmark frame -> sparse tile-coded face features.
//
//   raw 68-point frame --normalize--> [0,1]^2 --select 23--> tile code
//
// Each selected point is tile coded independently on a grid x grid board
// with `tilings` diagonally offset copies; point i owns the index block
// [i * tilings * grid^2, (i + 1) * tilings * grid^2) and a single bias
// index follows the last block.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "facevalue/errors.hpp"
#include "facevalue/random.hpp"
#include "facevalue/sparse_features.hpp"

namespace facevalue {

inline constexpr std::size_t kLandmarkCount = 68;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct LandmarkFrame {
  std::array<Point2, kLandmarkCount> points{};
  friend bool operator==(const LandmarkFrame&, const LandmarkFrame&) = default;
};

enum class NormalizationMode {
  per_axis,  ///< (v - min) / (max - min) independently on x and y
  uniform,   ///< both axes divided by the larger extent, aspect ratio kept
};

struct TileConfig {
  std::size_t tilings = 4;
  std::size_t grid = 10;
  /// Eyebrows 17..26 and mouth 48..60 of the 68-point annotation.
  std::vector<std::size_t> selected_indices = default_selection();
  NormalizationMode normalization = NormalizationMode::per_axis;

  static std::vector<std::size_t> default_selection() {
    std::vector<std::size_t> idx;
    for (std::size_t i = 17; i <= 26; ++i) idx.push_back(i);
    for (std::size_t i = 48; i <= 60; ++i) idx.push_back(i);
    return idx;
  }

  std::size_t tiles_per_point() const { return tilings * grid * grid; }
  std::size_t bias_index() const { return selected_indices.size() * tiles_per_point(); }
  std::size_t dim() const { return bias_index() + 1; }

  void validate() const {
    if (tilings < 1) throw contract_error("TileConfig: tilings must be >= 1");
    if (grid < 1) throw contract_error("TileConfig: grid must be >= 1");
    if (selected_indices.empty()) throw contract_error("TileConfig: no landmarks selected");
    for (std::size_t k = 0; k < selected_indices.size(); ++k) {
      if (selected_indices[k] >= kLandmarkCount) throw contract_error("TileConfig: landmark index >= 68");
      if (k > 0 && selected_indices[k] <= selected_indices[k - 1])
        throw contract_error("TileConfig: selected indices must be strictly increasing");
    }
  }
};

/// Map a raw frame into [0,1]^2 using its own bounding box.
inline LandmarkFrame normalize_landmarks(const LandmarkFrame& raw,
                                         NormalizationMode mode = NormalizationMode::per_axis) {
  double min_x = raw.points[0].x, max_x = min_x, min_y = raw.points[0].y, max_y = min_y;
  for (const Point2& p : raw.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw degenerate_frame_error("landmark frame has non-finite coordinate");
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  double ext_x = max_x - min_x, ext_y = max_y - min_y;
  if (!(ext_x > 0.0) || !(ext_y > 0.0)) throw degenerate_frame_error("landmark frame has zero extent");
  if (mode == NormalizationMode::uniform) ext_x = ext_y = std::max(ext_x, ext_y);

  LandmarkFrame out;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    // Clamp guards the max point against a rounding overshoot past 1.
    out.points[i].x = std::clamp((raw.points[i].x - min_x) / ext_x, 0.0, 1.0);
    out.points[i].y = std::clamp((raw.points[i].y - min_y) / ext_y, 0.0, 1.0);
  }
  return out;
}

inline std::vector<Point2> select_landmarks(const LandmarkFrame& frame, const TileConfig& config) {
  std::vector<Point2> out;
  out.reserve(config.selected_indices.size());
  for (std::size_t i : config.selected_indices) {
    if (i >= kLandmarkCount) throw contract_error("select_landmarks: index >= 68");
    out.push_back(frame.points[i]);
  }
  return out;
}

inline SparseFeatures face_features(std::span<const Point2> points, const TileConfig& config) {
  if (points.size() != config.selected_indices.size())
    throw contract_error("face_features: expected " + std::to_string(config.selected_indices.size()) + " points, got " +
                         std::to_string(points.size()));
  const std::size_t grid = config.grid;
  const std::size_t per_tiling = grid * grid;
  const double g = static_cast<double>(grid);
  const double tile_width = 1.0 / g;
  const auto cell = [&](double v, double offset) {
    const double c = std::floor((v + offset) * g);
    return static_cast<std::size_t>(std::clamp(c, 0.0, g - 1.0));
  };

  std::vector<std::size_t> active;
  active.reserve(points.size() * config.tilings + 1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point2& p = points[i];
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
      throw contract_error("face_features: point " + std::to_string(i) + " outside [0,1]^2; normalize first");
    for (std::size_t t = 0; t < config.tilings; ++t) {
      const double offset = static_cast<double>(t) * tile_width / static_cast<double>(config.tilings);
      active.push_back(i * config.tiles_per_point() + t * per_tiling + cell(p.y, offset) * grid + cell(p.x, offset));
    }
  }
  active.push_back(config.bias_index());
  return SparseFeatures(std::move(active), config.dim());
}

/// normalize -> select -> tile code.
inline SparseFeatures frame_features(const LandmarkFrame& raw, const TileConfig& config) {
  const LandmarkFrame norm = normalize_landmarks(raw, config.normalization);
  const auto pts = select_landmarks(norm, config);
  return face_features(pts, config);
}

// ---------------------------------------------------------------------------
// Synthetic faces

namespace canonical {

// Index ranges of the 68-point annotation.
inline constexpr std::size_t kJawBegin = 0, kJawEnd = 17;
inline constexpr std::size_t kBrowBegin = 17, kBrowEnd = 27;
inline constexpr std::array<std::size_t, 4> kMouthCorners{48, 54, 60, 64};

/// Canonical neutral face, version 1, in unit-square coordinates (y down):
///   jaw 0-16     half ellipse, centre (0.5, 0.35), radii (0.4, 0.6)
///   brows 17-26  two straight rows at y = 0.25
///   nose 27-35   bridge at x = 0.5, nostrils at y = 0.57
///   eyes 36-47   ellipses at (0.32, 0.36) and (0.68, 0.36)
///   mouth 48-67  closed, corners at (0.30, 0.70) and (0.70, 0.70)
inline const LandmarkFrame& face() {
  static const LandmarkFrame f = [] {
    LandmarkFrame r;
    auto& p = r.points;
    for (std::size_t k = 0; k < 17; ++k) {
      const double th = std::numbers::pi * (1.0 - static_cast<double>(k) / 16.0);
      p[k] = {0.5 + 0.4 * std::cos(th), 0.35 + 0.6 * std::sin(th)};
    }
    for (std::size_t k = 0; k < 5; ++k) {
      p[17 + k] = {0.20 + 0.055 * static_cast<double>(k), 0.25};
      p[22 + k] = {0.58 + 0.055 * static_cast<double>(k), 0.25};
    }
    for (std::size_t k = 0; k < 4; ++k) p[27 + k] = {0.5, 0.35 + 0.06 * static_cast<double>(k)};
    for (std::size_t k = 0; k < 5; ++k) p[31 + k] = {0.42 + 0.04 * static_cast<double>(k), 0.57};
    const auto eye = [&](std::size_t first, double cx) {
      for (std::size_t k = 0; k < 6; ++k) {
        const double th = std::numbers::pi * (1.0 + static_cast<double>(k) / 3.0);
        p[first + k] = {cx + 0.06 * std::cos(th), 0.36 + 0.025 * std::sin(th)};
      }
    };
    eye(36, 0.32);
    eye(42, 0.68);
    constexpr std::array<Point2, 20> mouth{{
        {0.30, 0.70}, {0.37, 0.68}, {0.44, 0.67}, {0.50, 0.675}, {0.56, 0.67},  // 48-52
        {0.63, 0.68}, {0.70, 0.70}, {0.63, 0.73}, {0.56, 0.745}, {0.50, 0.75},  // 53-57
        {0.44, 0.745}, {0.37, 0.73},                                            // 58-59
        {0.33, 0.70}, {0.42, 0.695}, {0.50, 0.695}, {0.58, 0.695},              // 60-63
        {0.67, 0.70}, {0.58, 0.705}, {0.50, 0.705}, {0.42, 0.705},              // 64-67
    }};
    for (std::size_t k = 0; k < mouth.size(); ++k) p[48 + k] = mouth[k];
    return r;
  }();
  return f;
}

}  // namespace canonical

/// Canonical face morphed by valence in [-1, 1], plus i.i.d. Gaussian noise.
/// Positive valence lifts the mouth corners and raises the brows; negative
/// valence drops the corners and lowers the brows.
inline LandmarkFrame synthesize_expression(double valence, double noise_sigma, Rng& rng) {
  if (!(valence >= -1.0 && valence <= 1.0)) throw contract_error("synthesize_expression: valence outside [-1,1]");
  if (!(noise_sigma >= 0.0)) throw contract_error("synthesize_expression: negative noise_sigma");
  LandmarkFrame f = canonical::face();
  for (std::size_t i : canonical::kMouthCorners) f.points[i].y -= 0.05 * valence;
  const double up = std::max(valence, 0.0), down = std::max(-valence, 0.0);
  for (std::size_t i = canonical::kBrowBegin; i < canonical::kBrowEnd; ++i) {
    f.points[i].y -= 0.03 * up;
    f.points[i].y += 0.02 * down;
  }
  if (noise_sigma > 0.0) {
    for (Point2& p : f.points) {
      p.x += noise_sigma * standard_normal(rng);
      p.y += noise_sigma * standard_normal(rng);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Text format: one frame per line, 136 numbers "x0 y0 x1 y1 ... x67 y67".

inline std::string format_frame(const LandmarkFrame& f) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) os << (i ? " " : "") << f.points[i].x << ' ' << f.points[i].y;
  return os.str();
}

inline LandmarkFrame parse_frame(const std::string& line) {
  std::istringstream is(line);
  LandmarkFrame f;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    if (!(is >> f.points[i].x >> f.points[i].y))
      throw parse_error("landmark frame: expected 136 numbers, got " + std::to_string(2 * i));
  }
  std::string extra;
  if (is >> extra) throw parse_error("landmark frame: more than 136 numbers");
  return f;
}

inline std::vector<LandmarkFrame> read_frames(std::istream& in) {
  std::vector<LandmarkFrame> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_frame(line));
  }
  return out;
}

inline void write_frames(std::ostream& out, std::span<const LandmarkFrame> frames) {
  for (const auto& f : frames) out << format_frame(f) << '\n';
}

}  // namespace facevalue
