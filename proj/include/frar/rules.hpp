#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "frar/puzzle.hpp"
#include "frar/rng.hpp"

namespace frar {

// ---------------------------------------------------------------------------
// Abstract-value helpers
// ---------------------------------------------------------------------------

// Rotate a slot mask by `step` positions (cyclic over the universe).
inline std::uint16_t rotate_mask(std::uint16_t m, int step, int universe) {
  std::uint16_t out = 0;
  for (int i = 0; i < universe; ++i) {
    if (m & (1 << i)) {
      const int j = ((i + step) % universe + universe) % universe;
      out |= static_cast<std::uint16_t>(1 << j);
    }
  }
  return out;
}

inline std::uint16_t full_mask(int universe) {
  return static_cast<std::uint16_t>((1u << universe) - 1u);
}

// The value a rule instance governs, read back off a realized panel.
// Returns nullopt when the panel has no well-defined value for the attribute
// (e.g. a scalar attribute whose objects disagree), which fails the rule.
inline std::optional<RuleValue> extract_value(const RuleSpec& spec, const Panel& p) {
  const ValueKind kind = value_kind(spec);
  if (spec.stream == Stream::Shape) {
    switch (spec.attribute) {
      case Attribute::Position:
        return RuleValue::of_mask(p.occupancy_mask());
      case Attribute::Number:
        return RuleValue::of_scalar(p.object_count());
      default: break;
    }
    auto level = [&](const ShapeObject& o) {
      switch (spec.attribute) {
        case Attribute::Size: return o.size;
        case Attribute::Type: return o.type;
        default: return o.color;
      }
    };
    if (kind == ValueKind::Set) {
      std::uint16_t m = 0;
      for (const auto& s : p.slots)
        if (s) m |= static_cast<std::uint16_t>(1 << level(*s));
      return RuleValue::of_mask(m);
    }
    std::optional<int> v;
    for (const auto& s : p.slots) {
      if (!s) continue;
      if (v && *v != level(*s)) return std::nullopt;
      v = level(*s);
    }
    if (!v) return std::nullopt;
    return RuleValue::of_scalar(*v);
  }
  // line stream
  if (spec.attribute == Attribute::Type) return RuleValue::of_mask(p.line_mask());
  // line color
  if (kind == ValueKind::Set) {
    std::uint16_t m = 0;
    for (const auto& c : p.lines)
      if (c) m |= static_cast<std::uint16_t>(1 << *c);
    return RuleValue::of_mask(m);
  }
  std::optional<int> v;
  for (const auto& c : p.lines) {
    if (!c) continue;
    if (v && *v != *c) return std::nullopt;
    v = *c;
  }
  if (!v) return std::nullopt;
  return RuleValue::of_scalar(*v);
}

// ---------------------------------------------------------------------------
// Rule checking over abstract values
// ---------------------------------------------------------------------------

namespace detail {

inline bool progression_triple(const RuleSpec& spec, const RuleValue& a, const RuleValue& b,
                               const RuleValue& c) {
  const int universe = universe_size(spec.stream, spec.attribute);
  for (int s : {1, 2, -1, -2}) {
    if (a.is_set) {
      if (rotate_mask(a.mask, s, universe) == b.mask &&
          rotate_mask(b.mask, s, universe) == c.mask)
        return true;
    } else {
      if (a.scalar + s == b.scalar && b.scalar + s == c.scalar) return true;
    }
  }
  return false;
}

inline bool arithmetic_triple(const RuleValue& a, const RuleValue& b, const RuleValue& c) {
  if (a.is_set)
    return c.mask == (a.mask | b.mask) ||
           c.mask == static_cast<std::uint16_t>(a.mask & ~b.mask);
  return c.scalar == a.scalar + b.scalar || c.scalar == a.scalar - b.scalar;
}

inline bool row_satisfies(const RuleSpec& spec, const RuleValue& a, const RuleValue& b,
                          const RuleValue& c) {
  switch (spec.rule) {
    case Rule::Constant: return a == b && b == c;
    case Rule::Progression: return progression_triple(spec, a, b, c);
    case Rule::Arithmetic: return arithmetic_triple(a, b, c);
    case Rule::Xor: return c.mask == (a.mask ^ b.mask);
    case Rule::Or: return c.mask == (a.mask | b.mask);
    case Rule::And: return c.mask == (a.mask & b.mask);
    case Rule::ConsistentUnion: return false;  // checked at grid level
  }
  return false;
}

inline std::array<RuleValue, 3> sorted_triple(RuleValue a, RuleValue b, RuleValue c) {
  std::array<RuleValue, 3> t{a, b, c};
  std::sort(t.begin(), t.end(), [](const RuleValue& x, const RuleValue& y) {
    if (x.is_set != y.is_set) return !x.is_set;
    if (x.scalar != y.scalar) return x.scalar < y.scalar;
    return x.mask < y.mask;
  });
  return t;
}

}  // namespace detail

// True when a 3x3 grid of abstract values satisfies the rule along rows
// (and columns when the spec demands it).
inline bool grid_satisfies(const RuleSpec& spec, const std::array<RuleValue, 9>& v) {
  static constexpr int kRows[3][3] = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}};
  static constexpr int kCols[3][3] = {{0, 3, 6}, {1, 4, 7}, {2, 5, 8}};
  auto lines_ok = [&](const int idx[3][3]) {
    if (spec.rule == Rule::ConsistentUnion) {
      const auto first = detail::sorted_triple(v[static_cast<std::size_t>(idx[0][0])],
                                               v[static_cast<std::size_t>(idx[0][1])],
                                               v[static_cast<std::size_t>(idx[0][2])]);
      for (int l = 1; l < 3; ++l)
        if (detail::sorted_triple(v[static_cast<std::size_t>(idx[l][0])],
                                  v[static_cast<std::size_t>(idx[l][1])],
                                  v[static_cast<std::size_t>(idx[l][2])]) != first)
          return false;
      return true;
    }
    for (int l = 0; l < 3; ++l)
      if (!detail::row_satisfies(spec, v[static_cast<std::size_t>(idx[l][0])],
                                 v[static_cast<std::size_t>(idx[l][1])],
                                 v[static_cast<std::size_t>(idx[l][2])]))
        return false;
    return true;
  };
  if (!lines_ok(kRows)) return false;
  if (spec.direction == Direction::RowAndColumn && !lines_ok(kCols)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// apply_rule: complete (first, second, ?) under a rule
// ---------------------------------------------------------------------------

inline RuleValue apply_rule(const RuleSpec& spec, const RuleValue& first,
                            const RuleValue& second, Rng& rng) {
  const int universe = universe_size(spec.stream, spec.attribute);
  switch (spec.rule) {
    case Rule::Constant:
      if (!(first == second))
        throw NoValidThird("constant rule with differing operands");
      return first;
    case Rule::Progression: {
      for (int s : {1, 2, -1, -2}) {
        if (first.is_set) {
          if (rotate_mask(first.mask, s, universe) == second.mask)
            return RuleValue::of_mask(rotate_mask(second.mask, s, universe));
        } else if (first.scalar + s == second.scalar) {
          const int third = second.scalar + s;
          if (third >= 0 && third < universe) return RuleValue::of_scalar(third);
        }
      }
      throw NoValidThird("no progression step fits the operands");
    }
    case Rule::Arithmetic: {
      std::vector<RuleValue> options;
      if (first.is_set) {
        options.push_back(RuleValue::of_mask(first.mask | second.mask));
        const auto minus = static_cast<std::uint16_t>(first.mask & ~second.mask);
        if (minus != 0) options.push_back(RuleValue::of_mask(minus));
      } else {
        const int plus = first.scalar + second.scalar;
        const int minus = first.scalar - second.scalar;
        if (plus < universe) options.push_back(RuleValue::of_scalar(plus));
        if (minus >= 0) options.push_back(RuleValue::of_scalar(minus));
      }
      if (options.empty()) throw NoValidThird("arithmetic result outside the domain");
      return options[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))];
    }
    case Rule::Xor: return RuleValue::of_mask(first.mask ^ second.mask);
    case Rule::Or: return RuleValue::of_mask(first.mask | second.mask);
    case Rule::And: return RuleValue::of_mask(first.mask & second.mask);
    case Rule::ConsistentUnion: {
      // Row-local reading: pick any third value distinct from both operands;
      // grid construction is responsible for repeating the triple per row.
      if (first.is_set) {
        for (int attempt = 0; attempt < 64; ++attempt) {
          const int k = static_cast<int>(rng.uniform_int(1, std::min(universe, 4)));
          std::uint16_t m = 0;
          for (int i : rng.sample_without_replacement(universe, k))
            m |= static_cast<std::uint16_t>(1 << i);
          if (m != first.mask && m != second.mask) return RuleValue::of_mask(m);
        }
        throw NoValidThird("could not find a third distinct set");
      }
      if (universe < 3) throw NoValidThird("domain too small for a value triple");
      int v = static_cast<int>(rng.uniform_int(0, universe - 1));
      while (v == first.scalar || v == second.scalar)
        v = static_cast<int>(rng.uniform_int(0, universe - 1));
      return RuleValue::of_scalar(v);
    }
  }
  throw NoValidThird("unhandled rule");
}

// ---------------------------------------------------------------------------
// Sampling rule-consistent value grids
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint16_t sample_mask(Rng& rng, int universe, int min_k, int max_k) {
  const int k = static_cast<int>(rng.uniform_int(min_k, std::min(max_k, universe)));
  std::uint16_t m = 0;
  for (int i : rng.sample_without_replacement(universe, k))
    m |= static_cast<std::uint16_t>(1 << i);
  return m;
}

// Operand mask sizes: positions can occupy much of the grid, value sets stay
// small so panels remain realizable alongside foil perturbations.
inline std::uint16_t sample_operand_mask(const RuleSpec& spec, Rng& rng) {
  const int universe = universe_size(spec.stream, spec.attribute);
  if (spec.attribute == Attribute::Position) return sample_mask(rng, universe, 2, 6);
  return sample_mask(rng, universe, 1, 4);
}

// One row (a, b, c) satisfying the rule. CU is excluded here (it is a
// cross-row constraint and sampled at grid level).
inline std::array<RuleValue, 3> sample_rule_row(const RuleSpec& spec, Rng& rng) {
  const int universe = universe_size(spec.stream, spec.attribute);
  const ValueKind kind = value_kind(spec);
  for (int attempt = 0; attempt < 128; ++attempt) {
    RuleValue a, b;
    switch (spec.rule) {
      case Rule::Constant: {
        if (kind == ValueKind::Set) {
          a = RuleValue::of_mask(sample_operand_mask(spec, rng));
        } else {
          a = RuleValue::of_scalar(static_cast<int>(rng.uniform_int(0, universe - 1)));
        }
        return {a, a, a};
      }
      case Rule::Progression: {
        const int s = std::array<int, 4>{1, 2, -1, -2}[static_cast<std::size_t>(
            rng.uniform_int(0, 3))];
        if (kind == ValueKind::Set) {
          a = RuleValue::of_mask(sample_operand_mask(spec, rng));
          b = RuleValue::of_mask(rotate_mask(a.mask, s, universe));
          return {a, b, RuleValue::of_mask(rotate_mask(b.mask, s, universe))};
        }
        const int lo = s > 0 ? 0 : -2 * s;
        const int hi = s > 0 ? universe - 1 - 2 * s : universe - 1;
        if (lo > hi) continue;
        const int base = static_cast<int>(rng.uniform_int(lo, hi));
        return {RuleValue::of_scalar(base), RuleValue::of_scalar(base + s),
                RuleValue::of_scalar(base + 2 * s)};
      }
      case Rule::Arithmetic: {
        if (kind == ValueKind::Set) {
          a = RuleValue::of_mask(sample_operand_mask(spec, rng));
          b = RuleValue::of_mask(sample_operand_mask(spec, rng));
          const bool plus = rng.uniform() < 0.5;
          const auto c = plus ? static_cast<std::uint16_t>(a.mask | b.mask)
                              : static_cast<std::uint16_t>(a.mask & ~b.mask);
          if (c == 0) continue;
          return {a, b, RuleValue::of_mask(c)};
        }
        const bool plus = rng.uniform() < 0.5;
        if (plus) {
          if (universe < 3) continue;
          const int x = static_cast<int>(rng.uniform_int(1, universe - 2));
          const int y = static_cast<int>(rng.uniform_int(1, universe - 1 - x));
          return {RuleValue::of_scalar(x), RuleValue::of_scalar(y),
                  RuleValue::of_scalar(x + y)};
        }
        const int x = static_cast<int>(rng.uniform_int(2, universe - 1));
        const int y = static_cast<int>(rng.uniform_int(1, x - 1));
        return {RuleValue::of_scalar(x), RuleValue::of_scalar(y),
                RuleValue::of_scalar(x - y)};
      }
      case Rule::Xor: {
        a = RuleValue::of_mask(sample_operand_mask(spec, rng));
        b = RuleValue::of_mask(sample_operand_mask(spec, rng));
        const auto c = static_cast<std::uint16_t>(a.mask ^ b.mask);
        if (c == 0) continue;
        return {a, b, RuleValue::of_mask(c)};
      }
      case Rule::Or: {
        a = RuleValue::of_mask(sample_operand_mask(spec, rng));
        b = RuleValue::of_mask(sample_operand_mask(spec, rng));
        return {a, b, RuleValue::of_mask(static_cast<std::uint16_t>(a.mask | b.mask))};
      }
      case Rule::And: {
        a = RuleValue::of_mask(sample_operand_mask(spec, rng));
        b = RuleValue::of_mask(sample_operand_mask(spec, rng));
        const auto c = static_cast<std::uint16_t>(a.mask & b.mask);
        if (c == 0) continue;
        return {a, b, RuleValue::of_mask(c)};
      }
      case Rule::ConsistentUnion:
        throw NoValidThird("consistent union rows are sampled at grid level");
    }
  }
  throw NoValidThird(std::string("could not sample a row for rule ") + to_string(spec.rule));
}

// Three mutually distinct values for a consistent-union triple.
inline std::array<RuleValue, 3> sample_cu_triple(const RuleSpec& spec, Rng& rng) {
  const ValueKind kind = value_kind(spec);
  for (int attempt = 0; attempt < 128; ++attempt) {
    std::array<RuleValue, 3> t;
    if (kind == ValueKind::Set) {
      for (auto& v : t) v = RuleValue::of_mask(sample_operand_mask(spec, rng));
    } else {
      const int universe = universe_size(spec.stream, spec.attribute);
      auto picks = rng.sample_without_replacement(universe, 3);
      if (picks.size() < 3) throw NoValidThird("domain too small for a value triple");
      for (int i = 0; i < 3; ++i) t[static_cast<std::size_t>(i)] =
          RuleValue::of_scalar(picks[static_cast<std::size_t>(i)]);
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    return t;
  }
  throw NoValidThird("could not sample a distinct value triple");
}

// True when every set value in the grid is non-empty. Empty abstract sets
// make panels unrealizable (there would be nothing carrying the value).
inline bool grid_realizable(const std::array<RuleValue, 9>& v) {
  for (const auto& x : v)
    if (x.is_set && x.mask == 0) return false;
  return true;
}

}  // namespace detail

// Sample a full 3x3 abstract-value grid satisfying the spec.
inline std::array<RuleValue, 9> sample_rule_grid(const RuleSpec& spec, Rng& rng) {
  const int universe = universe_size(spec.stream, spec.attribute);
  const ValueKind kind = value_kind(spec);
  // Generous budget: deriving the third row column-wise for two-way
  // arithmetic grids is rejection sampling with a modest hit rate.
  for (int attempt = 0; attempt < 512; ++attempt) {
    std::array<RuleValue, 9> v;
    if (spec.rule == Rule::ConsistentUnion) {
      const auto triple = detail::sample_cu_triple(spec, rng);
      if (spec.direction == Direction::RowAndColumn) {
        // Latin square: cyclic shifts of one random permutation.
        std::vector<int> perm{0, 1, 2};
        rng.shuffle(perm);
        const int dir = rng.uniform() < 0.5 ? 1 : 2;
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c)
            v[static_cast<std::size_t>(r * 3 + c)] =
                triple[static_cast<std::size_t>(perm[static_cast<std::size_t>((c + r * dir) % 3)])];
      } else {
        for (int r = 0; r < 3; ++r) {
          std::vector<int> perm{0, 1, 2};
          rng.shuffle(perm);
          for (int c = 0; c < 3; ++c)
            v[static_cast<std::size_t>(r * 3 + c)] =
                triple[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])];
        }
      }
    } else if (spec.direction == Direction::Row) {
      for (int r = 0; r < 3; ++r) {
        const auto row = detail::sample_rule_row(spec, rng);
        for (int c = 0; c < 3; ++c) v[static_cast<std::size_t>(r * 3 + c)] =
            row[static_cast<std::size_t>(c)];
      }
    } else if (spec.rule == Rule::Constant) {
      const auto row = detail::sample_rule_row(spec, rng);
      for (auto& x : v) x = row[0];
    } else if (spec.rule == Rule::Progression && kind == ValueKind::Scalar) {
      const std::array<int, 4> steps{1, 2, -1, -2};
      const int sr = steps[static_cast<std::size_t>(rng.uniform_int(0, 3))];
      const int sc = steps[static_cast<std::size_t>(rng.uniform_int(0, 3))];
      int lo = 0, hi = 0;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          const int off = r * sc + c * sr;
          lo = std::min(lo, off);
          hi = std::max(hi, off);
        }
      if (-lo > universe - 1 - hi) continue;
      const int base = static_cast<int>(rng.uniform_int(-lo, universe - 1 - hi));
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          v[static_cast<std::size_t>(r * 3 + c)] = RuleValue::of_scalar(base + r * sc + c * sr);
    } else if (spec.rule == Rule::Progression) {
      // cyclic position shifts compose, so a bilinear rotation grid works
      const std::array<int, 4> steps{1, 2, -1, -2};
      const int sr = steps[static_cast<std::size_t>(rng.uniform_int(0, 3))];
      const int sc = steps[static_cast<std::size_t>(rng.uniform_int(0, 3))];
      const auto base = detail::sample_operand_mask(spec, rng);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          v[static_cast<std::size_t>(r * 3 + c)] =
              RuleValue::of_mask(rotate_mask(base, r * sc + c * sr, universe));
    } else {
      // Arithmetic / Xor / Or / And with both directions: sample the first
      // two rows independently, derive the third row column-wise, then keep
      // the grid only if rows and columns all check out.
      const auto row0 = detail::sample_rule_row(spec, rng);
      const auto row1 = detail::sample_rule_row(spec, rng);
      for (int c = 0; c < 3; ++c) {
        v[static_cast<std::size_t>(c)] = row0[static_cast<std::size_t>(c)];
        v[static_cast<std::size_t>(3 + c)] = row1[static_cast<std::size_t>(c)];
      }
      bool ok = true;
      for (int c = 0; c < 3 && ok; ++c) {
        try {
          v[static_cast<std::size_t>(6 + c)] = apply_rule(
              spec, v[static_cast<std::size_t>(c)], v[static_cast<std::size_t>(3 + c)], rng);
        } catch (const NoValidThird&) {
          ok = false;
        }
      }
      if (!ok) continue;
    }
    if (!detail::grid_realizable(v)) continue;
    if (!grid_satisfies(spec, v)) continue;
    return v;
  }
  throw GenerationExhausted(std::string("could not sample a value grid for rule ") +
                            to_string(spec.rule));
}

}  // namespace frar
