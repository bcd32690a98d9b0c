#pragma once

// Logic Embedding Network: scores each of the 8 candidate answers of a 3x3
// matrix puzzle by pooling relation-MLP outputs over every 3-subset of the
// 9 panels (8 contexts + the candidate). The 6 row/column triples go through
// g1, the remaining 78 through g2, and their pooled sum through f:
//
//   s_k = f( sum_{rowcol triples} g1(xa, xb, xc, z)
//           + sum_{other triples}  g2(xa, xb, xc, z) )
//
// where z is a learned projection of the mean context embedding. The 56
// context-only triples are shared across the 8 candidates, so one forward
// pass costs 56 + 8*28 = 280 relation evaluations instead of 8*84.

#include <array>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "frar/dataset.hpp"
#include "frar/error.hpp"
#include "frar/nn.hpp"
#include "frar/puzzle.hpp"
#include "frar/rng.hpp"
#include "frar/tensor.hpp"

namespace frar {

struct LenConfig {
  int embed_dim = 64;
  // Empty = a single linear layer. On one-hot symbolic panels a linear
  // embedder generalizes from small datasets where a hidden layer memorizes.
  std::vector<int> encoder_hidden = {};
  std::vector<int> g_hidden = {128, 128};
  std::vector<int> f_hidden = {128};
  bool two_stream = false;        // separate shape/line encoders + fusion layer
  double type_loss_weight = 0.0;  // 10.0 when the auxiliary type head is on
  int type_vocab = 0;             // rule-attribute label count for the type head
  int num_choices = 8;            // K
  int matrix_n = 3;               // N
};

// All 3-subsets of the 9 panel slots; slot 8 is the candidate. `rowcol`
// holds the six row/column triples in their written order; `others` holds
// the remaining triples in ascending slot order.
struct TripleIndex {
  std::vector<std::array<int, 3>> rowcol;
  std::vector<std::array<int, 3>> others;

  TripleIndex() {
    rowcol = {{{0, 1, 2}}, {{3, 4, 5}}, {{6, 7, 8}},
              {{0, 3, 6}}, {{1, 4, 7}}, {{2, 5, 8}}};
    const std::set<std::array<int, 3>> row_sets(rowcol.begin(), rowcol.end());
    for (int a = 0; a < 9; ++a)
      for (int b = a + 1; b < 9; ++b)
        for (int c = b + 1; c < 9; ++c) {
          const std::array<int, 3> t{a, b, c};
          if (!row_sets.count(t)) others.push_back(t);
        }
  }

  static const TripleIndex& get() {
    static const TripleIndex idx;
    return idx;
  }
};

// Multi-hot indicator over the taxonomy's rule-attribute combinations,
// the target for the auxiliary type head.
inline std::vector<double> type_target(const Puzzle& pz, Taxonomy tax, int vocab) {
  std::vector<double> t(static_cast<std::size_t>(vocab), 0.0);
  for (const RuleSpec& r : pz.rules) {
    const int i = combo_index(tax, r.rule, r.stream, r.attribute);
    if (i < 0 || i >= vocab)
      throw std::invalid_argument("type_target: rule outside the label vocabulary");
    t[static_cast<std::size_t>(i)] = 1.0;
  }
  return t;
}

class LenModel {
 public:
  static constexpr int kShapeBlock = kSlots * kSlotBlock;      // 252
  static constexpr int kLineBlockAll = kLineTypes * kLineBlock;  // 77

  struct Output {
    Tensor scores;         // [1, K] pre-softmax
    Tensor probs;          // [1, K] on the simplex
    Tensor relation_mean;  // [1, embed] penultimate vector (export / type head)
    Tensor type_logits;    // [1, type_vocab]; undefined when the head is off
    int prediction = 0;    // argmax of scores
  };

  LenModel(LenConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    if (cfg_.embed_dim <= 0)
      throw std::invalid_argument("len config: embed_dim must be positive");
    if (cfg_.type_loss_weight < 0)
      throw std::invalid_argument("len config: type_loss_weight must be nonnegative");
    if (cfg_.type_loss_weight > 0 && cfg_.type_vocab <= 0)
      throw std::invalid_argument("len config: type loss enabled without a label vocabulary");
    if (cfg_.num_choices != 8 || cfg_.matrix_n != 3)
      throw std::invalid_argument("len config: only 3x3 matrices with 8 choices are supported");
    Rng rng(seed);
    const auto e = static_cast<std::size_t>(cfg_.embed_dim);
    if (cfg_.two_stream) {
      shape_encoder_ = Mlp(store_, "encoder.shape", kShapeBlock, cfg_.encoder_hidden, e, rng);
      line_encoder_ = Mlp(store_, "encoder.line", kLineBlockAll, cfg_.encoder_hidden, e, rng);
      fusion_ = Linear(store_, "fusion", 2 * e, e, rng);
    } else {
      encoder_ = Mlp(store_, "encoder", kPanelDim, cfg_.encoder_hidden, e, rng);
    }
    z_proj_ = Linear(store_, "z_proj", e, e, rng);
    g1_ = Mlp(store_, "g1", 4 * e, cfg_.g_hidden, e, rng);
    g2_ = Mlp(store_, "g2", 4 * e, cfg_.g_hidden, e, rng);
    f_ = Mlp(store_, "f", e, cfg_.f_hidden, 1, rng);
    if (cfg_.type_vocab > 0)
      type_head_ = Linear(store_, "type_head", e, static_cast<std::size_t>(cfg_.type_vocab), rng);
  }

  const LenConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Panel encodings through the (stream-split, if configured) embedder.
  // Input rows are raw panel encodings, output rows are embed_dim vectors.
  Tensor embed(const Tensor& encoded_panels) const {
    if (!cfg_.two_stream) return encoder_(encoded_panels);
    const Tensor s = shape_encoder_(slice_cols(encoded_panels, 0, kShapeBlock));
    const Tensor l = line_encoder_(slice_cols(encoded_panels, kShapeBlock, kPanelDim));
    return fuse_two_stream(s, l);
  }

  Tensor fuse_two_stream(const Tensor& shape_repr, const Tensor& line_repr) const {
    if (!cfg_.two_stream)
      throw ConfigMismatch("fuse_two_stream: model was built single-stream");
    return fusion_(concat_cols({shape_repr, line_repr}));
  }

  // [16, embed]: rows 0..7 are the contexts, rows 8..15 the choices.
  Tensor embed_panels(const Puzzle& pz) const {
    std::vector<double> data;
    data.reserve(16 * static_cast<std::size_t>(kPanelDim));
    for (const Panel& p : pz.context) {
      const auto e = encode_panel(p);
      data.insert(data.end(), e.begin(), e.end());
    }
    for (const Panel& p : pz.choices) {
      const auto e = encode_panel(p);
      data.insert(data.end(), e.begin(), e.end());
    }
    return embed(Tensor::from({16, static_cast<std::size_t>(kPanelDim)}, std::move(data)));
  }

  // z: learned projection of the mean context embedding (order-free pooling).
  Tensor global_context(const Tensor& context_embeddings) const {
    if (context_embeddings.rows() != 8)
      throw ShapeError("global_context: expected 8 context embeddings, got " +
                       std::to_string(context_embeddings.rows()));
    return z_proj_(scale(group_sum_rows(context_embeddings, 8), 1.0 / 8.0));
  }

  // Reference scorer for one candidate: walks all 84 triples directly.
  // forward() computes the same quantity with shared context triples.
  Tensor score_choice(const Tensor& context_embeddings, const Tensor& choice_embedding,
                      const Tensor& z) const {
    if (context_embeddings.rows() != 8 || choice_embedding.rows() != 1)
      throw ShapeError("score_choice: expected 8 contexts and 1 choice");
    const Tensor all = concat_rows({context_embeddings, choice_embedding});  // rows 0..8
    const auto& ti = TripleIndex::get();
    const Tensor sum1 = sum_rows_(g1_(triple_inputs_(all, ti.rowcol, z)));
    const Tensor sum2 = sum_rows_(g2_(triple_inputs_(all, ti.others, z)));
    return f_(add(sum1, sum2));
  }

  Output forward(const Puzzle& pz) const {
    const auto& ti = TripleIndex::get();
    const Tensor E = embed_panels(pz);
    const Tensor ctx = gather_rows(E, {0, 1, 2, 3, 4, 5, 6, 7});
    const Tensor z = global_context(ctx);

    // split triples into context-only and candidate-bearing
    std::vector<std::array<int, 3>> g1_shared, g1_cand, g2_shared, g2_cand;
    for (const auto& t : ti.rowcol) (t[2] == 8 ? g1_cand : g1_shared).push_back(t);
    for (const auto& t : ti.others) (t[2] == 8 ? g2_cand : g2_shared).push_back(t);

    const Tensor g1s = sum_rows_(g1_(triple_inputs_(E, g1_shared, z)));
    const Tensor g2s = sum_rows_(g2_(triple_inputs_(E, g2_shared, z)));
    const Tensor shared = add(g1s, g2s);  // [1, embed]

    // candidate triples for all 8 choices in one batch, choice-major
    const Tensor g1c = group_sum_rows(
        g1_(triple_inputs_(E, per_choice_(g1_cand), z)),
        g1_cand.size());  // [8, embed]
    const Tensor g2c = group_sum_rows(
        g2_(triple_inputs_(E, per_choice_(g2_cand), z)),
        g2_cand.size());  // [8, embed]

    const Tensor relation = add(add(repeat_rows(shared, 8), g1c), g2c);  // [8, embed]
    Output out;
    out.scores = reshape(f_(relation), {1, 8});
    out.probs = softmax(out.scores);
    out.relation_mean = scale(group_sum_rows(relation, 8), 1.0 / 8.0);
    if (type_head_.weight.defined()) out.type_logits = type_head_(out.relation_mean);
    out.prediction = static_cast<int>(argmax(out.scores.value()));
    return out;
  }

  // Choice cross-entropy plus (optionally) the weighted multi-label type
  // term on the auxiliary head.
  Tensor loss(const Output& out, int answer, const std::vector<double>& type_labels = {}) const {
    if (answer < 0 || answer >= cfg_.num_choices)
      throw std::invalid_argument("loss: answer index out of range");
    Tensor l = cross_entropy(out.scores, answer);
    if (cfg_.type_loss_weight > 0) {
      if (static_cast<int>(type_labels.size()) != cfg_.type_vocab)
        throw std::invalid_argument("loss: type label vector has wrong length");
      const Tensor target =
          Tensor::from({1, static_cast<std::size_t>(cfg_.type_vocab)}, type_labels);
      l = add(l, scale(binary_cross_entropy(sigmoid(out.type_logits), target),
                       cfg_.type_loss_weight));
    }
    return l;
  }

  int predict(const Puzzle& pz) const {
    NoGradGuard ng;
    return forward(pz).prediction;
  }

 private:
  // [n, 4*embed] rows: (x_a | x_b | x_c | z) for each triple, slots taken
  // from the rows of `panels` ([9+ rows, embed]; slot 8 = candidate row).
  Tensor triple_inputs_(const Tensor& panels, const std::vector<std::array<int, 3>>& triples,
                        const Tensor& z) const {
    std::vector<std::size_t> ia, ib, ic;
    ia.reserve(triples.size());
    ib.reserve(triples.size());
    ic.reserve(triples.size());
    for (const auto& t : triples) {
      ia.push_back(static_cast<std::size_t>(t[0]));
      ib.push_back(static_cast<std::size_t>(t[1]));
      ic.push_back(static_cast<std::size_t>(t[2]));
    }
    return concat_cols({gather_rows(panels, ia), gather_rows(panels, ib),
                        gather_rows(panels, ic), repeat_rows(z, triples.size())});
  }

  // Expands candidate-bearing triples for all 8 choices: slot 8 becomes the
  // embedding row 8+k, choice-major order.
  std::vector<std::array<int, 3>> per_choice_(const std::vector<std::array<int, 3>>& cand) const {
    std::vector<std::array<int, 3>> out;
    out.reserve(cand.size() * 8);
    for (int k = 0; k < 8; ++k)
      for (const auto& t : cand) {
        std::array<int, 3> u = t;
        for (int& s : u)
          if (s == 8) s = 8 + k;
        out.push_back(u);
      }
    return out;
  }

  static Tensor sum_rows_(const Tensor& t) { return group_sum_rows(t, t.rows()); }

  LenConfig cfg_;
  ParameterStore store_;
  Mlp encoder_;        // single-stream
  Mlp shape_encoder_;  // two-stream
  Mlp line_encoder_;
  Linear fusion_;
  Linear z_proj_;
  Mlp g1_, g2_, f_;
  Linear type_head_;
};

// One row per puzzle: seed, category, distraction count, penultimate vector.
inline void export_embeddings(const LenModel& model, const std::vector<Puzzle>& puzzles,
                              const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "id,category,distraction_count";
  for (int i = 0; i < model.config().embed_dim; ++i) os << ",e" << i;
  os << "\n";
  NoGradGuard ng;
  os << std::setprecision(17);
  for (const Puzzle& pz : puzzles) {
    const auto out = model.forward(pz);
    os << pz.seed << "," << pz.category << "," << pz.distracting.size();
    for (double v : out.relation_mean.value()) os << "," << v;
    os << "\n";
  }
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace frar
