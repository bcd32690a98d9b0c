#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "frar/error.hpp"
#include "frar/puzzle.hpp"

namespace frar {

// ---------------------------------------------------------------------------
// Feature encoding consumed by the student
// ---------------------------------------------------------------------------

inline constexpr int kSlotBlock = 1 + kTypeLevels + kSizeLevels + kColorLevels;  // 28
inline constexpr int kLineBlock = 1 + kColorLevels;                              // 11
inline constexpr int kPanelDim = kSlots * kSlotBlock + kLineTypes * kLineBlock;  // 329

// Per-slot presence bit + one-hot attribute blocks, then per-line-type
// presence bit + one-hot color. Injective on the symbolic panel domain.
inline std::vector<double> encode_panel(const Panel& p) {
  std::vector<double> v(kPanelDim, 0.0);
  for (int i = 0; i < kSlots; ++i) {
    const auto& s = p.slots[static_cast<std::size_t>(i)];
    if (!s) continue;
    const int b = i * kSlotBlock;
    v[static_cast<std::size_t>(b)] = 1.0;
    v[static_cast<std::size_t>(b + 1 + s->type)] = 1.0;
    v[static_cast<std::size_t>(b + 1 + kTypeLevels + s->size)] = 1.0;
    v[static_cast<std::size_t>(b + 1 + kTypeLevels + kSizeLevels + s->color)] = 1.0;
  }
  for (int t = 0; t < kLineTypes; ++t) {
    const auto& c = p.lines[static_cast<std::size_t>(t)];
    if (!c) continue;
    const int b = kSlots * kSlotBlock + t * kLineBlock;
    v[static_cast<std::size_t>(b)] = 1.0;
    v[static_cast<std::size_t>(b + 1 + *c)] = 1.0;
  }
  return v;
}

// ---------------------------------------------------------------------------
// JSON-lines dataset files
// ---------------------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline json panel_to_json(const Panel& p) {
  json slots = json::array();
  for (int i = 0; i < kSlots; ++i) {
    const auto& s = p.slots[static_cast<std::size_t>(i)];
    if (!s) continue;
    slots.push_back({{"color", s->color}, {"size", s->size}, {"slot", i}, {"type", s->type}});
  }
  json lines = json::array();
  for (int t = 0; t < kLineTypes; ++t) {
    const auto& c = p.lines[static_cast<std::size_t>(t)];
    if (!c) continue;
    lines.push_back({{"color", *c}, {"type", t}});
  }
  return {{"lines", lines}, {"slots", slots}};
}

inline void check_range(int v, int lo, int hi, const char* what) {
  if (v < lo || v >= hi)
    throw FormatError(std::string(what) + " " + std::to_string(v) + " outside [" +
                      std::to_string(lo) + "," + std::to_string(hi) + ")");
}

inline Panel panel_from_json(const json& j) {
  Panel p;
  for (const auto& s : j.at("slots")) {
    const int slot = s.at("slot").get<int>();
    check_range(slot, 0, kSlots, "slot index");
    if (p.slots[static_cast<std::size_t>(slot)]) throw FormatError("duplicate slot entry");
    ShapeObject o;
    o.type = s.at("type").get<int>();
    o.size = s.at("size").get<int>();
    o.color = s.at("color").get<int>();
    check_range(o.type, 0, kTypeLevels, "shape type");
    check_range(o.size, 0, kSizeLevels, "shape size");
    check_range(o.color, 0, kColorLevels, "shape color");
    p.slots[static_cast<std::size_t>(slot)] = o;
  }
  for (const auto& l : j.at("lines")) {
    const int t = l.at("type").get<int>();
    check_range(t, 0, kLineTypes, "line type");
    if (p.lines[static_cast<std::size_t>(t)]) throw FormatError("duplicate line entry");
    const int c = l.at("color").get<int>();
    check_range(c, 0, kColorLevels, "line color");
    p.lines[static_cast<std::size_t>(t)] = c;
  }
  return p;
}

}  // namespace detail

inline nlohmann::json puzzle_to_json(const Puzzle& pz) {
  using nlohmann::json;
  json context = json::array(), choices = json::array();
  for (const auto& p : pz.context) context.push_back(detail::panel_to_json(p));
  for (const auto& p : pz.choices) choices.push_back(detail::panel_to_json(p));
  json rules = json::array();
  for (const auto& r : pz.rules)
    rules.push_back({{"attribute", to_string(r.attribute)},
                     {"direction", to_string(r.direction)},
                     {"rule", to_string(r.rule)},
                     {"stream", to_string(r.stream)}});
  json distracting = json::array();
  for (const auto& a : pz.distracting)
    distracting.push_back({{"attribute", to_string(a.attribute)}, {"stream", to_string(a.stream)}});
  return {{"answer", pz.answer},     {"category", pz.category}, {"choices", choices},
          {"context", context},      {"distracting", distracting},
          {"rules", rules},          {"seed", pz.seed}};
}

inline Puzzle puzzle_from_json(const nlohmann::json& j) {
  Puzzle pz;
  pz.answer = j.at("answer").get<int>();
  detail::check_range(pz.answer, 0, 8, "answer index");
  pz.category = j.at("category").get<int>();
  if (pz.category < 0) throw FormatError("negative category");
  const auto& context = j.at("context");
  const auto& choices = j.at("choices");
  if (context.size() != 8 || choices.size() != 8)
    throw FormatError("expected 8 context and 8 choice panels");
  for (std::size_t i = 0; i < 8; ++i) {
    pz.context[i] = detail::panel_from_json(context[i]);
    pz.choices[i] = detail::panel_from_json(choices[i]);
  }
  try {
    for (const auto& r : j.at("rules")) {
      RuleSpec spec;
      spec.rule = rule_from_string(r.at("rule").get<std::string>());
      spec.stream = stream_from_string(r.at("stream").get<std::string>());
      spec.attribute = attribute_from_string(r.at("attribute").get<std::string>());
      spec.direction = direction_from_string(r.at("direction").get<std::string>());
      pz.rules.push_back(spec);
    }
    for (const auto& a : j.at("distracting"))
      pz.distracting.push_back({stream_from_string(a.at("stream").get<std::string>()),
                                attribute_from_string(a.at("attribute").get<std::string>())});
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  pz.seed = j.at("seed").get<std::uint64_t>();
  return pz;
}

inline void write_dataset(const std::vector<Puzzle>& puzzles, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  for (const auto& pz : puzzles) os << puzzle_to_json(pz).dump() << '\n';
  if (!os) throw IoError("write failed for " + path);
}

inline std::vector<Puzzle> read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<Puzzle> out;
  std::string line;
  for (int line_no = 1; std::getline(is, line); ++line_no) {
    try {
      out.push_back(puzzle_from_json(nlohmann::json::parse(line)));
    } catch (const FormatError& e) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace frar
