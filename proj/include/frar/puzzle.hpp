#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace frar {

// ---------------------------------------------------------------------------
// Attribute domains
//
// Panels are symbolic: a 3x3 grid of slots that may hold one shape object
// each, plus a fixed family of line overlays. All attribute levels are small
// integers; the encoder turns them into one-hot blocks for the student.
// ---------------------------------------------------------------------------

inline constexpr int kSlots = 9;        // grid positions inside one panel
inline constexpr int kTypeLevels = 7;   // shape types
inline constexpr int kSizeLevels = 10;  // shape sizes
inline constexpr int kColorLevels = 10; // shape / line colors
inline constexpr int kLineTypes = 7;    // line overlay families
inline constexpr int kNumberMax = 9;    // object count 0..9

enum class Stream { Shape, Line };
enum class Attribute { Size, Type, Color, Position, Number };
enum class Rule { Constant, Progression, Arithmetic, Xor, Or, And, ConsistentUnion };
enum class Direction { Row, RowAndColumn };
enum class Taxonomy { PgmStyle, RavenStyle };

// Reference to one attribute of one stream, e.g. (Shape, Size).
struct AttrRef {
  Stream stream = Stream::Shape;
  Attribute attribute = Attribute::Size;
  bool operator==(const AttrRef&) const = default;
};

// One reasoning regularity: a rule applied to an attribute along rows (and
// optionally columns) of the 3x3 matrix.
struct RuleSpec {
  Rule rule = Rule::Constant;
  Stream stream = Stream::Shape;
  Attribute attribute = Attribute::Size;
  Direction direction = Direction::Row;
  bool operator==(const RuleSpec&) const = default;

  AttrRef attr() const { return {stream, attribute}; }
};

// Number of distinct levels of an attribute (also the universe size for
// set-valued interpretations of that attribute).
inline int universe_size(Stream stream, Attribute attr) {
  if (stream == Stream::Shape) {
    switch (attr) {
      case Attribute::Size: return kSizeLevels;
      case Attribute::Type: return kTypeLevels;
      case Attribute::Color: return kColorLevels;
      case Attribute::Position: return kSlots;
      case Attribute::Number: return kNumberMax + 1;
    }
  } else {
    switch (attr) {
      case Attribute::Color: return kColorLevels;
      case Attribute::Type: return kLineTypes;
      default: break;
    }
  }
  throw std::invalid_argument("universe_size: attribute not defined for stream");
}

// Whether a rule instance manipulates a scalar level or a set of levels.
// Position and line-type presence are inherently set-like; Number is always a
// count; value attributes become set-valued under the set-operation rules.
enum class ValueKind { Scalar, Set };

inline ValueKind value_kind(Stream stream, Attribute attr, Rule rule) {
  if (attr == Attribute::Position) return ValueKind::Set;
  if (stream == Stream::Line && attr == Attribute::Type) return ValueKind::Set;
  if (attr == Attribute::Number) return ValueKind::Scalar;
  if (rule == Rule::Xor || rule == Rule::Or || rule == Rule::And) return ValueKind::Set;
  return ValueKind::Scalar;
}

inline ValueKind value_kind(const RuleSpec& spec) {
  return value_kind(spec.stream, spec.attribute, spec.rule);
}

// Abstract value a rule manipulates: either a scalar level or a bitmask over
// the attribute's universe.
struct RuleValue {
  bool is_set = false;
  int scalar = 0;           // meaningful when !is_set
  std::uint16_t mask = 0;   // meaningful when is_set
  bool operator==(const RuleValue&) const = default;

  static RuleValue of_scalar(int v) { return {false, v, 0}; }
  static RuleValue of_mask(std::uint16_t m) { return {true, 0, m}; }
};

inline int popcount16(std::uint16_t m) {
  int c = 0;
  while (m) {
    m &= static_cast<std::uint16_t>(m - 1);
    ++c;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Taxonomies
// ---------------------------------------------------------------------------

inline bool combo_allowed(Taxonomy tax, Rule rule, Stream stream, Attribute attr) {
  if (tax == Taxonomy::PgmStyle) {
    if (rule == Rule::Constant || rule == Rule::Arithmetic) return false;
    if (stream == Stream::Shape) {
      switch (attr) {
        case Attribute::Size:
        case Attribute::Type:
        case Attribute::Color:
          return true;
        case Attribute::Number:
          return rule == Rule::Progression || rule == Rule::ConsistentUnion;
        case Attribute::Position:
          return rule == Rule::Xor || rule == Rule::Or || rule == Rule::And;
      }
      return false;
    }
    // line stream
    if (attr == Attribute::Color) return true;
    if (attr == Attribute::Type) return rule != Rule::Progression;
    return false;
  }
  // RavenStyle: shape stream only, no set-operation rules, and no
  // arithmetic on the unordered Type attribute.
  if (stream != Stream::Shape) return false;
  if (rule == Rule::Xor || rule == Rule::Or || rule == Rule::And) return false;
  if (rule == Rule::Arithmetic && attr == Attribute::Type) return false;
  return true;
}

struct Combo {
  Rule rule;
  Stream stream;
  Attribute attribute;
  bool operator==(const Combo&) const = default;
};

// Legal rule-attribute combinations, ordered lexicographically by
// (rule, stream, attribute) enum index.
inline std::vector<Combo> enumerate_combinations(Taxonomy tax) {
  std::vector<Combo> out;
  for (int r = 0; r <= static_cast<int>(Rule::ConsistentUnion); ++r)
    for (int s = 0; s <= static_cast<int>(Stream::Line); ++s)
      for (int a = 0; a <= static_cast<int>(Attribute::Number); ++a) {
        const auto rule = static_cast<Rule>(r);
        const auto stream = static_cast<Stream>(s);
        const auto attr = static_cast<Attribute>(a);
        if (combo_allowed(tax, rule, stream, attr)) out.push_back({rule, stream, attr});
      }
  return out;
}

// Index of a combination inside enumerate_combinations(tax), or -1.
inline int combo_index(Taxonomy tax, Rule rule, Stream stream, Attribute attr) {
  const auto combos = enumerate_combinations(tax);
  for (std::size_t i = 0; i < combos.size(); ++i)
    if (combos[i] == Combo{rule, stream, attr}) return static_cast<int>(i);
  return -1;
}

// ---------------------------------------------------------------------------
// Panels and puzzles
// ---------------------------------------------------------------------------

struct ShapeObject {
  int type = 0;
  int size = 0;
  int color = 0;
  bool operator==(const ShapeObject&) const = default;
};

struct Panel {
  std::array<std::optional<ShapeObject>, kSlots> slots;
  std::array<std::optional<int>, kLineTypes> lines;  // color per present line
  bool operator==(const Panel&) const = default;

  int object_count() const {
    int n = 0;
    for (const auto& s : slots) n += s.has_value() ? 1 : 0;
    return n;
  }
  std::uint16_t occupancy_mask() const {
    std::uint16_t m = 0;
    for (int i = 0; i < kSlots; ++i)
      if (slots[static_cast<std::size_t>(i)]) m |= static_cast<std::uint16_t>(1 << i);
    return m;
  }
  std::uint16_t line_mask() const {
    std::uint16_t m = 0;
    for (int i = 0; i < kLineTypes; ++i)
      if (lines[static_cast<std::size_t>(i)]) m |= static_cast<std::uint16_t>(1 << i);
    return m;
  }
};

struct Puzzle {
  std::array<Panel, 8> context;  // matrix cells (1,1)..(3,2), row-major
  std::array<Panel, 8> choices;
  int answer = 0;  // index into choices
  std::vector<RuleSpec> rules;
  int category = 0;
  std::vector<AttrRef> distracting;
  std::uint64_t seed = 0;
  bool operator==(const Puzzle&) const = default;
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

// A rule cannot be completed inside its domain for the given operands.
struct NoValidThird : std::runtime_error {
  explicit NoValidThird(const std::string& msg) : std::runtime_error(msg) {}
};

// The generator's resampling budget was exceeded.
struct GenerationExhausted : std::runtime_error {
  explicit GenerationExhausted(const std::string& msg) : std::runtime_error(msg) {}
};

// Could not produce the required number of distinct invalid foils.
struct FoilCollision : std::runtime_error {
  explicit FoilCollision(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Names (used by dataset serialization and the CLI)
// ---------------------------------------------------------------------------

inline const char* to_string(Stream s) { return s == Stream::Shape ? "shape" : "line"; }

inline const char* to_string(Attribute a) {
  switch (a) {
    case Attribute::Size: return "size";
    case Attribute::Type: return "type";
    case Attribute::Color: return "color";
    case Attribute::Position: return "position";
    case Attribute::Number: return "number";
  }
  return "?";
}

inline const char* to_string(Rule r) {
  switch (r) {
    case Rule::Constant: return "constant";
    case Rule::Progression: return "progression";
    case Rule::Arithmetic: return "arithmetic";
    case Rule::Xor: return "xor";
    case Rule::Or: return "or";
    case Rule::And: return "and";
    case Rule::ConsistentUnion: return "consistent_union";
  }
  return "?";
}

inline const char* to_string(Direction d) {
  return d == Direction::Row ? "row" : "row_and_column";
}

inline const char* to_string(Taxonomy t) {
  return t == Taxonomy::PgmStyle ? "pgm_style" : "raven_style";
}

inline Stream stream_from_string(const std::string& s) {
  if (s == "shape") return Stream::Shape;
  if (s == "line") return Stream::Line;
  throw std::invalid_argument("unknown stream: " + s);
}

inline Attribute attribute_from_string(const std::string& s) {
  if (s == "size") return Attribute::Size;
  if (s == "type") return Attribute::Type;
  if (s == "color") return Attribute::Color;
  if (s == "position") return Attribute::Position;
  if (s == "number") return Attribute::Number;
  throw std::invalid_argument("unknown attribute: " + s);
}

inline Rule rule_from_string(const std::string& s) {
  if (s == "constant") return Rule::Constant;
  if (s == "progression") return Rule::Progression;
  if (s == "arithmetic") return Rule::Arithmetic;
  if (s == "xor") return Rule::Xor;
  if (s == "or") return Rule::Or;
  if (s == "and") return Rule::And;
  if (s == "consistent_union" || s == "distribute_three") return Rule::ConsistentUnion;
  throw std::invalid_argument("unknown rule: " + s);
}

inline Direction direction_from_string(const std::string& s) {
  if (s == "row") return Direction::Row;
  if (s == "row_and_column") return Direction::RowAndColumn;
  throw std::invalid_argument("unknown direction: " + s);
}

inline Taxonomy taxonomy_from_string(const std::string& s) {
  if (s == "pgm_style") return Taxonomy::PgmStyle;
  if (s == "raven_style") return Taxonomy::RavenStyle;
  throw std::invalid_argument("unknown taxonomy: " + s);
}

}  // namespace frar
