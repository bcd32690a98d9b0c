#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "frar/puzzle.hpp"
#include "frar/rng.hpp"
#include "frar/rules.hpp"

namespace frar {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// One puzzle category: the rule set every puzzle of the category satisfies,
// plus optional per-category overrides of the distraction settings.
struct CategoryDef {
  std::vector<RuleSpec> rules;
  std::optional<double> distraction_mean;
  std::optional<double> distraction_divergence;
  std::vector<AttrRef> distractor_pool;  // empty -> all eligible attributes
};

struct GeneratorConfig {
  Taxonomy taxonomy = Taxonomy::PgmStyle;
  std::vector<CategoryDef> categories;
  double distraction_mean = 0.0;
  double distraction_divergence = 0.0;
  int num_choices = 8;
  std::uint64_t rng_seed = 0;
};

namespace detail {

inline const RuleSpec* find_rule(const std::vector<RuleSpec>& rules, Stream s, Attribute a) {
  for (const auto& r : rules)
    if (r.stream == s && r.attribute == a) return &r;
  return nullptr;
}

inline bool governs(const std::vector<RuleSpec>& rules, AttrRef a) {
  return find_rule(rules, a.stream, a.attribute) != nullptr;
}

}  // namespace detail

// Attributes eligible as distractors for a rule set: everything visible that
// no rule governs. Position drops out when a count rule already pins how many
// objects appear.
inline std::vector<AttrRef> default_distractor_pool(const std::vector<RuleSpec>& rules) {
  static const AttrRef kCandidates[] = {
      {Stream::Shape, Attribute::Size},     {Stream::Shape, Attribute::Type},
      {Stream::Shape, Attribute::Color},    {Stream::Shape, Attribute::Position},
      {Stream::Line, Attribute::Type},      {Stream::Line, Attribute::Color},
  };
  std::vector<AttrRef> pool;
  const bool number_governed = detail::governs(rules, {Stream::Shape, Attribute::Number});
  for (const auto& a : kCandidates) {
    if (detail::governs(rules, a)) continue;
    if (a.attribute == Attribute::Position && number_governed) continue;
    pool.push_back(a);
  }
  return pool;
}

inline void validate_config(const GeneratorConfig& cfg) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("generator config: " + msg); };
  if (cfg.categories.empty()) fail("no categories defined");
  if (cfg.num_choices != 8) fail("choice count is fixed at 8");
  if (cfg.distraction_mean < 0 || cfg.distraction_divergence < 0)
    fail("distraction parameters must be nonnegative");
  for (std::size_t c = 0; c < cfg.categories.size(); ++c) {
    const auto& cat = cfg.categories[c];
    const std::string where = "category " + std::to_string(c) + ": ";
    if (cat.rules.empty()) fail(where + "no rules");
    for (const auto& r : cat.rules)
      if (!combo_allowed(cfg.taxonomy, r.rule, r.stream, r.attribute))
        fail(where + std::string(to_string(r.rule)) + " on " + to_string(r.stream) + "-" +
             to_string(r.attribute) + " is not in the active taxonomy");
    for (std::size_t i = 0; i < cat.rules.size(); ++i)
      for (std::size_t j = i + 1; j < cat.rules.size(); ++j)
        if (cat.rules[i].attr() == cat.rules[j].attr())
          fail(where + "two rules govern the same attribute");
    if (detail::governs(cat.rules, {Stream::Shape, Attribute::Number}) &&
        detail::governs(cat.rules, {Stream::Shape, Attribute::Position}))
      fail(where + "count and position rules conflict");
    const auto pool =
        cat.distractor_pool.empty() ? default_distractor_pool(cat.rules) : cat.distractor_pool;
    for (const auto& a : cat.distractor_pool) {
      if (detail::governs(cat.rules, a)) fail(where + "distractor pool contains a governed attribute");
      if (a.attribute == Attribute::Number) fail(where + "object count cannot be a distractor");
      if (a.attribute == Attribute::Position &&
          detail::governs(cat.rules, {Stream::Shape, Attribute::Number}))
        fail(where + "position distractor conflicts with a count rule");
    }
    const double mean = cat.distraction_mean.value_or(cfg.distraction_mean);
    const double div = cat.distraction_divergence.value_or(cfg.distraction_divergence);
    if (mean < 0 || div < 0) fail(where + "distraction parameters must be nonnegative");
    if (mean > static_cast<double>(pool.size()))
      fail(where + "distraction mean exceeds the available attributes");
  }
}

// ---------------------------------------------------------------------------
// Puzzle drafts
// ---------------------------------------------------------------------------

// Values for the attributes no rule governs, shared by all panels of one
// puzzle unless a distractor overrides them per panel.
struct BaseTemplate {
  std::uint16_t occupancy = 0;
  int type = 0;
  int size = 0;
  int color = 0;
  std::uint16_t lines = 0;  // line presence; 0 = no line overlay
  int line_color = 0;
};

// Per-panel values of one distracting attribute. Indices 0..8 are the matrix
// cells (8 = true answer), 9..15 the seven foils.
struct DistractionOverride {
  AttrRef attr;
  std::array<RuleValue, 16> values;
};

struct PuzzleDraft {
  std::vector<RuleSpec> rules;
  std::vector<std::array<RuleValue, 9>> grids;      // abstract values, per rule
  std::vector<std::vector<RuleValue>> foil_values;  // [7][rule]
  std::vector<int> foil_dup_rank;  // >0: same value tuple as an earlier foil
  BaseTemplate base;
  std::vector<AttrRef> pool;  // eligible distractors
  std::vector<AttrRef> distracting;
  std::vector<DistractionOverride> overrides;
  std::array<Panel, 9> panels;
  std::array<Panel, 7> foil_panels;
  std::uint64_t seed = 0;  // salt for per-panel realization streams
  int min_objects = 1;
  int min_lines = 0;
};

namespace detail {

inline std::uint16_t subset_mask(Rng& rng, int universe, int k) {
  std::uint16_t m = 0;
  for (int i : rng.sample_without_replacement(universe, k))
    m |= static_cast<std::uint16_t>(1 << i);
  return m;
}

inline std::vector<int> mask_elements(std::uint16_t m, int universe) {
  std::vector<int> out;
  for (int i = 0; i < universe; ++i)
    if (m & (1 << i)) out.push_back(i);
  return out;
}

inline RuleValue draft_value(const PuzzleDraft& d, std::size_t rule_idx, int panel) {
  return panel < 9 ? d.grids[rule_idx][static_cast<std::size_t>(panel)]
                   : d.foil_values[static_cast<std::size_t>(panel - 9)][rule_idx];
}

// How many objects (or lines) a panel needs to carry its governed values.
inline int needed_objects(const PuzzleDraft& d, int panel) {
  int need = 0;
  for (std::size_t r = 0; r < d.rules.size(); ++r) {
    const auto& spec = d.rules[r];
    if (spec.stream != Stream::Shape) continue;
    if (spec.attribute == Attribute::Position || spec.attribute == Attribute::Number) continue;
    if (value_kind(spec) == ValueKind::Set)
      need = std::max(need, popcount16(draft_value(d, r, panel).mask));
    else
      need = std::max(need, 1);
  }
  return need;
}

inline int needed_lines(const PuzzleDraft& d, int panel) {
  int need = 0;
  for (std::size_t r = 0; r < d.rules.size(); ++r) {
    const auto& spec = d.rules[r];
    if (spec.stream != Stream::Line || spec.attribute != Attribute::Color) continue;
    if (value_kind(spec) == ValueKind::Set)
      need = std::max(need, popcount16(draft_value(d, r, panel).mask));
    else
      need = std::max(need, 1);
  }
  return need;
}

// Whether every panel can physically carry its governed values (enough
// occupied slots / present lines). Checked before realization; failures send
// the generator back to resample the value grids.
inline bool draft_carriers_ok(const PuzzleDraft& d) {
  const RuleSpec* pos = find_rule(d.rules, Stream::Shape, Attribute::Position);
  const RuleSpec* num = find_rule(d.rules, Stream::Shape, Attribute::Number);
  const RuleSpec* ltype = find_rule(d.rules, Stream::Line, Attribute::Type);
  std::size_t pos_i = 0, num_i = 0, ltype_i = 0;
  for (std::size_t r = 0; r < d.rules.size(); ++r) {
    if (&d.rules[r] == pos) pos_i = r;
    if (&d.rules[r] == num) num_i = r;
    if (&d.rules[r] == ltype) ltype_i = r;
  }
  for (int p = 0; p < 16; ++p) {
    const int need_obj = needed_objects(d, p);
    if (pos) {
      if (popcount16(draft_value(d, pos_i, p).mask) < need_obj) return false;
    } else if (num) {
      if (draft_value(d, num_i, p).scalar < need_obj) return false;
    }
    const int need_ln = needed_lines(d, p);
    if (ltype && popcount16(draft_value(d, ltype_i, p).mask) < need_ln) return false;
  }
  return true;
}

inline int max_set_carriers(const RuleSpec& spec) {
  return spec.stream == Stream::Shape ? kSlots : kLineTypes;
}

// A different abstract value for the foil of one rule.
inline RuleValue perturb_value(const RuleSpec& spec, const RuleValue& v, Rng& rng) {
  const int universe = universe_size(spec.stream, spec.attribute);
  if (value_kind(spec) == ValueKind::Scalar) {
    // counts stay >= 1 so foil panels keep visible objects
    const int lo = spec.attribute == Attribute::Number ? 1 : 0;
    int nv = v.scalar;
    while (nv == v.scalar) nv = static_cast<int>(rng.uniform_int(lo, universe - 1));
    return RuleValue::of_scalar(nv);
  }
  const int cap =
      spec.attribute == Attribute::Position ? universe : std::min(universe, max_set_carriers(spec));
  for (int attempt = 0; attempt < 128; ++attempt) {
    std::uint16_t toggles = 0;
    for (int i : rng.sample_without_replacement(universe, static_cast<int>(rng.uniform_int(1, 2))))
      toggles |= static_cast<std::uint16_t>(1 << i);
    const auto nm = static_cast<std::uint16_t>(v.mask ^ toggles);
    if (nm == 0 || nm == v.mask) continue;
    if (popcount16(nm) > cap) continue;
    return RuleValue::of_mask(nm);
  }
  throw NoValidThird("could not perturb a set value inside its domain");
}

// True when the tuple of per-rule bottom-right values completes the matrix.
inline bool tuple_completes(const PuzzleDraft& d, const std::vector<RuleValue>& tuple) {
  for (std::size_t r = 0; r < d.rules.size(); ++r) {
    auto g = d.grids[r];
    g[8] = tuple[r];
    if (!grid_satisfies(d.rules[r], g)) return false;
  }
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Realization: abstract values -> symbolic panels
// ---------------------------------------------------------------------------

namespace detail {

inline Panel realize_panel(const PuzzleDraft& d, int panel) {
  Rng rng(derive_seed(d.seed, 0x7031, static_cast<std::uint64_t>(panel)));
  const RuleSpec* pos = find_rule(d.rules, Stream::Shape, Attribute::Position);
  const RuleSpec* num = find_rule(d.rules, Stream::Shape, Attribute::Number);
  auto rule_index = [&](const RuleSpec* spec) {
    for (std::size_t r = 0; r < d.rules.size(); ++r)
      if (&d.rules[r] == spec) return r;
    return std::size_t{0};
  };
  auto override_for = [&](AttrRef a) -> const RuleValue* {
    for (const auto& o : d.overrides)
      if (o.attr == a) return &o.values[static_cast<std::size_t>(panel)];
    return nullptr;
  };

  // occupancy
  std::uint16_t occ = d.base.occupancy;
  if (pos) {
    occ = draft_value(d, rule_index(pos), panel).mask;
  } else if (num) {
    occ = subset_mask(rng, kSlots, draft_value(d, rule_index(num), panel).scalar);
  } else if (const auto* ov = override_for({Stream::Shape, Attribute::Position})) {
    occ = ov->mask;
  }

  Panel p;
  for (int i = 0; i < kSlots; ++i)
    if (occ & (1 << i))
      p.slots[static_cast<std::size_t>(i)] = ShapeObject{d.base.type, d.base.size, d.base.color};

  auto set_level = [&](ShapeObject& o, Attribute a, int v) {
    if (a == Attribute::Size) o.size = v;
    else if (a == Attribute::Type) o.type = v;
    else o.color = v;
  };

  // governed shape value attributes
  for (std::size_t r = 0; r < d.rules.size(); ++r) {
    const auto& spec = d.rules[r];
    if (spec.stream != Stream::Shape) continue;
    if (spec.attribute == Attribute::Position || spec.attribute == Attribute::Number) continue;
    const RuleValue v = draft_value(d, r, panel);
    if (!v.is_set) {
      for (auto& s : p.slots)
        if (s) set_level(*s, spec.attribute, v.scalar);
      continue;
    }
    // cover the value set exactly: the first |v| occupied slots (in random
    // order) take distinct elements, the rest repeat elements of the set
    auto elems = mask_elements(v.mask, universe_size(spec.stream, spec.attribute));
    rng.shuffle(elems);
    std::vector<int> occupied;
    for (int i = 0; i < kSlots; ++i)
      if (p.slots[static_cast<std::size_t>(i)]) occupied.push_back(i);
    rng.shuffle(occupied);
    for (std::size_t i = 0; i < occupied.size(); ++i) {
      const int value =
          i < elems.size()
              ? elems[i]
              : elems[static_cast<std::size_t>(rng.uniform_int(
                    0, static_cast<std::int64_t>(elems.size()) - 1))];
      set_level(*p.slots[static_cast<std::size_t>(occupied[i])], spec.attribute, value);
    }
  }

  // distractor overrides for non-governed shape value attributes
  for (Attribute a : {Attribute::Size, Attribute::Type, Attribute::Color}) {
    if (find_rule(d.rules, Stream::Shape, a)) continue;
    if (const auto* ov = override_for({Stream::Shape, a}))
      for (auto& s : p.slots)
        if (s) set_level(*s, a, ov->scalar);
  }

  // line stream
  const RuleSpec* ltype = find_rule(d.rules, Stream::Line, Attribute::Type);
  const RuleSpec* lcolor = find_rule(d.rules, Stream::Line, Attribute::Color);
  std::uint16_t lm = d.base.lines;
  if (ltype) {
    lm = draft_value(d, rule_index(ltype), panel).mask;
  } else if (const auto* ov = override_for({Stream::Line, Attribute::Type})) {
    lm = ov->mask;
  }
  for (int i = 0; i < kLineTypes; ++i)
    if (lm & (1 << i)) p.lines[static_cast<std::size_t>(i)] = d.base.line_color;

  if (lcolor) {
    const RuleValue v = draft_value(d, rule_index(lcolor), panel);
    if (!v.is_set) {
      for (auto& c : p.lines)
        if (c) c = v.scalar;
    } else {
      auto elems = mask_elements(v.mask, kColorLevels);
      rng.shuffle(elems);
      std::vector<int> present;
      for (int i = 0; i < kLineTypes; ++i)
        if (p.lines[static_cast<std::size_t>(i)]) present.push_back(i);
      rng.shuffle(present);
      for (std::size_t i = 0; i < present.size(); ++i) {
        const int value =
            i < elems.size()
                ? elems[i]
                : elems[static_cast<std::size_t>(rng.uniform_int(
                      0, static_cast<std::int64_t>(elems.size()) - 1))];
        p.lines[static_cast<std::size_t>(present[i])] = value;
      }
    }
  } else if (const auto* ov = override_for({Stream::Line, Attribute::Color})) {
    for (auto& c : p.lines)
      if (c) c = ov->scalar;
  }
  return p;
}

// Foils that repeat another foil's value tuple get one extra nudge on a free
// attribute so the eight choices stay pairwise distinct.
inline void apply_dup_tweak(const PuzzleDraft& d, Panel& p, int rank) {
  auto free_attr = [&](Attribute a) {
    if (find_rule(d.rules, Stream::Shape, a)) return false;
    for (const auto& x : d.distracting)
      if (x == AttrRef{Stream::Shape, a}) return false;
    return true;
  };
  for (Attribute a : {Attribute::Size, Attribute::Color, Attribute::Type}) {
    if (!free_attr(a)) continue;
    const int universe = universe_size(Stream::Shape, a);
    for (auto& s : p.slots)
      if (s) {
        if (a == Attribute::Size) s->size = (s->size + rank) % universe;
        else if (a == Attribute::Color) s->color = (s->color + rank) % universe;
        else s->type = (s->type + rank) % universe;
      }
    return;
  }
  // fall back to toggling occupancy when counts/positions are free
  const bool occupancy_free =
      !find_rule(d.rules, Stream::Shape, Attribute::Position) &&
      !find_rule(d.rules, Stream::Shape, Attribute::Number) &&
      std::none_of(d.distracting.begin(), d.distracting.end(), [](const AttrRef& x) {
        return x == AttrRef{Stream::Shape, Attribute::Position};
      });
  if (occupancy_free) {
    int seen = 0;
    for (int i = 0; i < kSlots; ++i) {
      auto& slot = p.slots[static_cast<std::size_t>(i)];
      if (!slot && ++seen == rank + 1) {
        // copy an existing object so governed value sets stay intact
        for (const auto& s : p.slots)
          if (s) {
            slot = *s;
            return;
          }
        slot = ShapeObject{d.base.type, d.base.size, d.base.color};
        return;
      }
    }
  }
  throw FoilCollision("no free attribute to distinguish duplicate foils");
}

inline void realize_all(PuzzleDraft& d) {
  for (int p = 0; p < 9; ++p) d.panels[static_cast<std::size_t>(p)] = realize_panel(d, p);
  for (int f = 0; f < 7; ++f) {
    Panel p = realize_panel(d, 9 + f);
    if (d.foil_dup_rank[static_cast<std::size_t>(f)] > 0)
      apply_dup_tweak(d, p, d.foil_dup_rank[static_cast<std::size_t>(f)]);
    d.foil_panels[static_cast<std::size_t>(f)] = p;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generation stages
// ---------------------------------------------------------------------------

inline PuzzleDraft sample_puzzle_draft(const GeneratorConfig& cfg, int category, Rng& rng) {
  const auto& cat = cfg.categories.at(static_cast<std::size_t>(category));
  for (int attempt = 0; attempt < 100; ++attempt) {
    try {
      PuzzleDraft d;
      d.rules = cat.rules;
      d.seed = rng.next_u64();
      d.pool = cat.distractor_pool.empty() ? default_distractor_pool(cat.rules)
                                           : cat.distractor_pool;
      for (const auto& spec : d.rules) d.grids.push_back(sample_rule_grid(spec, rng));

      // foil value tuples
      std::vector<RuleValue> answer;
      for (std::size_t r = 0; r < d.rules.size(); ++r) answer.push_back(d.grids[r][8]);
      for (int f = 0; f < 7; ++f) {
        bool placed = false;
        for (int t = 0; t < 100 && !placed; ++t) {
          auto tuple = answer;
          const auto r = static_cast<std::size_t>(
              rng.uniform_int(0, static_cast<std::int64_t>(d.rules.size()) - 1));
          try {
            tuple[r] = detail::perturb_value(d.rules[r], tuple[r], rng);
          } catch (const NoValidThird&) {
            continue;
          }
          if (detail::tuple_completes(d, tuple)) continue;  // still a valid answer
          int dup = 0;
          for (const auto& prev : d.foil_values)
            if (prev == tuple) ++dup;
          if (dup > 0 && t < 60) continue;  // prefer unseen value tuples
          d.foil_values.push_back(tuple);
          d.foil_dup_rank.push_back(dup);
          placed = true;
        }
        if (!placed)
          throw FoilCollision("could not find 7 invalid completions for category " +
                              std::to_string(category));
      }

      if (!detail::draft_carriers_ok(d)) continue;

      // sizing needs for the shared template
      for (int p = 0; p < 16; ++p) {
        d.min_objects = std::max(d.min_objects, detail::needed_objects(d, p));
        d.min_lines = std::max(d.min_lines, detail::needed_lines(d, p));
      }

      // base values for everything no rule touches
      d.base.type = static_cast<int>(rng.uniform_int(0, kTypeLevels - 1));
      d.base.size = static_cast<int>(rng.uniform_int(0, kSizeLevels - 1));
      d.base.color = static_cast<int>(rng.uniform_int(0, kColorLevels - 1));
      d.base.line_color = static_cast<int>(rng.uniform_int(0, kColorLevels - 1));
      const int base_k =
          std::clamp(std::max(d.min_objects, static_cast<int>(rng.uniform_int(2, 5))), 1, kSlots);
      d.base.occupancy = detail::subset_mask(rng, kSlots, base_k);
      if (detail::find_rule(d.rules, Stream::Line, Attribute::Color)) {
        const int lk = std::clamp(std::max(d.min_lines, static_cast<int>(rng.uniform_int(2, 4))),
                                  1, kLineTypes);
        d.base.lines = detail::subset_mask(rng, kLineTypes, lk);
      }

      detail::realize_all(d);
      return d;
    } catch (const NoValidThird&) {
      continue;
    } catch (const GenerationExhausted&) {
      continue;
    }
  }
  throw GenerationExhausted("no viable draft after 100 attempts for category " +
                            std::to_string(category));
}

// Samples how many distracting attributes to use, picks them from the
// draft's pool, gives each an independent uniform value per panel, and
// re-realizes the panels. mean=0 leaves the draft untouched.
inline void inject_distraction(PuzzleDraft& d, double mean, double divergence, Rng& rng) {
  const auto avail = static_cast<int>(d.pool.size());
  const double raw = divergence == 0.0 ? mean : rng.normal(mean, divergence);
  const int k = std::clamp(static_cast<int>(std::llround(raw)), 0, avail);
  if (k == 0) {
    const bool dirty = !d.overrides.empty();
    d.distracting.clear();
    d.overrides.clear();
    if (dirty) detail::realize_all(d);
    return;
  }
  d.distracting.clear();
  for (int i : rng.sample_without_replacement(avail, k))
    d.distracting.push_back(d.pool[static_cast<std::size_t>(i)]);
  std::sort(d.distracting.begin(), d.distracting.end(), [](const AttrRef& a, const AttrRef& b) {
    if (a.stream != b.stream) return static_cast<int>(a.stream) < static_cast<int>(b.stream);
    return static_cast<int>(a.attribute) < static_cast<int>(b.attribute);
  });

  // a line-color distractor needs lines to color: give the template some if
  // the line stream is otherwise unused
  const bool wants_line_color =
      std::any_of(d.distracting.begin(), d.distracting.end(), [](const AttrRef& a) {
        return a == AttrRef{Stream::Line, Attribute::Color};
      });
  const bool line_type_varies =
      detail::find_rule(d.rules, Stream::Line, Attribute::Type) != nullptr ||
      std::any_of(d.distracting.begin(), d.distracting.end(), [](const AttrRef& a) {
        return a == AttrRef{Stream::Line, Attribute::Type};
      });
  if (wants_line_color && d.base.lines == 0 && !line_type_varies)
    d.base.lines = detail::subset_mask(rng, kLineTypes, static_cast<int>(rng.uniform_int(2, 4)));

  d.overrides.clear();
  for (const auto& attr : d.distracting) {
    DistractionOverride ov;
    ov.attr = attr;
    for (int p = 0; p < 16; ++p) {
      RuleValue v;
      if (attr.attribute == Attribute::Position) {
        const int lo = std::max(d.min_objects, 1);
        v = RuleValue::of_mask(
            detail::subset_mask(rng, kSlots, static_cast<int>(rng.uniform_int(lo, kSlots))));
      } else if (attr == AttrRef{Stream::Line, Attribute::Type}) {
        const int lo = std::max(d.min_lines, 1);
        v = RuleValue::of_mask(
            detail::subset_mask(rng, kLineTypes, static_cast<int>(rng.uniform_int(lo, kLineTypes))));
      } else {
        v = RuleValue::of_scalar(static_cast<int>(
            rng.uniform_int(0, universe_size(attr.stream, attr.attribute) - 1)));
      }
      ov.values[static_cast<std::size_t>(p)] = v;
    }
    d.overrides.push_back(ov);
  }
  detail::realize_all(d);
}

// Shuffle the answer in among the foils.
inline std::pair<std::array<Panel, 8>, int> make_choices(const PuzzleDraft& d, Rng& rng) {
  std::array<Panel, 8> choices;
  const int answer = static_cast<int>(rng.uniform_int(0, 7));
  int next = 0;
  for (int i = 0; i < 8; ++i) {
    if (i == answer) {
      choices[static_cast<std::size_t>(i)] = d.panels[8];
    } else {
      choices[static_cast<std::size_t>(i)] = d.foil_panels[static_cast<std::size_t>(next++)];
    }
  }
  for (int i = 0; i < 8; ++i)
    for (int j = i + 1; j < 8; ++j)
      if (choices[static_cast<std::size_t>(i)] == choices[static_cast<std::size_t>(j)])
        throw FoilCollision("choices " + std::to_string(i) + " and " + std::to_string(j) +
                            " coincide");
  return {choices, answer};
}

// ---------------------------------------------------------------------------
// Validation (independent of how the puzzle was built)
// ---------------------------------------------------------------------------

inline bool candidate_completes(const std::array<Panel, 8>& context, const Panel& candidate,
                                const std::vector<RuleSpec>& rules) {
  for (const auto& spec : rules) {
    std::array<RuleValue, 9> values;
    for (int p = 0; p < 9; ++p) {
      const Panel& panel = p < 8 ? context[static_cast<std::size_t>(p)] : candidate;
      const auto v = extract_value(spec, panel);
      if (!v) return false;
      values[static_cast<std::size_t>(p)] = *v;
    }
    if (!grid_satisfies(spec, values)) return false;
  }
  return true;
}

// True iff the marked answer completes every rule and no other choice does.
inline bool validate_puzzle(const Puzzle& pz) {
  if (pz.answer < 0 || pz.answer >= 8) return false;
  for (int k = 0; k < 8; ++k) {
    const bool ok = candidate_completes(pz.context, pz.choices[static_cast<std::size_t>(k)],
                                        pz.rules);
    if (k == pz.answer ? !ok : ok) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Top-level generation
// ---------------------------------------------------------------------------

inline Puzzle generate_puzzle(const GeneratorConfig& cfg, int category, Rng& rng) {
  validate_config(cfg);
  const auto& cat = cfg.categories.at(static_cast<std::size_t>(category));
  const double mean = cat.distraction_mean.value_or(cfg.distraction_mean);
  const double divergence = cat.distraction_divergence.value_or(cfg.distraction_divergence);
  for (int attempt = 0; attempt < 100; ++attempt) {
    try {
      PuzzleDraft d = sample_puzzle_draft(cfg, category, rng);
      inject_distraction(d, mean, divergence, rng);
      auto [choices, answer] = make_choices(d, rng);
      Puzzle pz;
      for (int p = 0; p < 8; ++p) pz.context[static_cast<std::size_t>(p)] =
          d.panels[static_cast<std::size_t>(p)];
      pz.choices = choices;
      pz.answer = answer;
      pz.rules = d.rules;
      pz.category = category;
      pz.distracting = d.distracting;
      pz.seed = rng.seed();
      if (!validate_puzzle(pz)) continue;
      return pz;
    } catch (const FoilCollision&) {
      continue;
    }
  }
  throw GenerationExhausted("could not generate a verifiable puzzle for category " +
                            std::to_string(category));
}

}  // namespace frar
