#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "errors.hpp"
#include "raster.hpp"

namespace mvl {

// Label palette of semantic rasters (8-bit PNG gray values).
enum class SemanticLabel : std::uint8_t { unknown = 0, ceiling = 1, floor = 2, wall = 3, clutter = 4 };

inline std::string_view to_string(SemanticLabel l) {
  switch (l) {
    case SemanticLabel::ceiling: return "ceiling";
    case SemanticLabel::floor: return "floor";
    case SemanticLabel::wall: return "wall";
    case SemanticLabel::clutter: return "clutter";
    case SemanticLabel::unknown: break;
  }
  return "unknown";
}

using SemanticMap = Raster<std::uint8_t>;

// Label -> semantic confidence c^s. Labels missing from the table map to 0.
struct SemanticTable {
  std::map<std::uint8_t, double> confidence;

  // Layout structures count fully, everything else not at all.
  static SemanticTable layout_default() {
    return {{{static_cast<std::uint8_t>(SemanticLabel::ceiling), 1.0},
             {static_cast<std::uint8_t>(SemanticLabel::floor), 1.0},
             {static_cast<std::uint8_t>(SemanticLabel::wall), 1.0},
             {static_cast<std::uint8_t>(SemanticLabel::clutter), 0.0}}};
  }
};

inline std::uint8_t parse_semantic_label(std::string_view name) {
  for (auto l : {SemanticLabel::unknown, SemanticLabel::ceiling, SemanticLabel::floor,
                 SemanticLabel::wall, SemanticLabel::clutter})
    if (to_string(l) == name) return static_cast<std::uint8_t>(l);
  // Numeric keys address raw palette values.
  try {
    std::size_t used = 0;
    const int v = std::stoi(std::string(name), &used);
    if (used == name.size() && v >= 0 && v <= 255) return static_cast<std::uint8_t>(v);
  } catch (const std::exception&) {
  }
  throw DomainError("unknown semantic label '" + std::string(name) + "'");
}

// JSON: {"ceiling": 1, "floor": 1, "wall": 1, "clutter": 0, "7": 0.5}.
inline void from_json(const nlohmann::json& j, SemanticTable& t) {
  t.confidence.clear();
  for (const auto& [key, value] : j.items()) {
    const double c = value.get<double>();
    if (!(c >= 0.0 && c <= 1.0)) throw DomainError("semantic confidence must lie in [0, 1]");
    t.confidence[parse_semantic_label(key)] = c;
  }
}

inline void to_json(nlohmann::json& j, const SemanticTable& t) {
  j = nlohmann::json::object();
  for (const auto& [label, c] : t.confidence) {
    const auto name = to_string(static_cast<SemanticLabel>(label));
    j[label <= 4 ? std::string(name) : std::to_string(label)] = c;
  }
}

struct SemanticConfidence {
  Raster<double> values;
  long unknown_labels = 0;  // pixels whose label is absent from the table
};

inline SemanticConfidence semantic_confidence(const SemanticMap& sem, const SemanticTable& table) {
  SemanticConfidence out{Raster<double>(sem.width(), sem.height(), 0.0), 0};
  for (std::size_t i = 0; i < sem.size(); ++i) {
    const auto it = table.confidence.find(sem[i]);
    if (it == table.confidence.end()) {
      ++out.unknown_labels;
    } else {
      out.values[i] = it->second;
    }
  }
  return out;
}

// Per-pixel contribution weights c = c^s * c^a.
struct ConfidenceMap {
  Raster<double> semantic;
  Raster<double> attention;
  Raster<double> combined;

  static ConfidenceMap ones(int width, int height) {
    Raster<double> one(width, height, 1.0);
    return {one, one, one};
  }
};

inline ConfidenceMap combine(const Raster<double>& c_s, const Raster<double>& c_a) {
  if (!c_s.same_shape(c_a)) throw DomainError("confidence rasters must share dimensions");
  ConfidenceMap out{c_s, c_a, Raster<double>(c_s.width(), c_s.height())};
  for (std::size_t i = 0; i < c_s.size(); ++i) {
    if (!(c_s[i] >= 0.0 && c_s[i] <= 1.0) || !(c_a[i] >= 0.0 && c_a[i] <= 1.0))
      throw DomainError("confidence values must lie in [0, 1]");
    out.combined[i] = c_s[i] * c_a[i];
  }
  return out;
}

// Attention raster from an 8-bit gray image (value / 255).
inline Raster<double> attention_from_gray(const Raster<std::uint8_t>& img) {
  Raster<double> out(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = img[i] / 255.0;
  return out;
}

}  // namespace mvl
