#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "frar/generator.hpp"
#include "frar/len.hpp"
#include "frar/rng.hpp"
#include "grad_check.hpp"

namespace {

using namespace frar;

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.taxonomy = Taxonomy::PgmStyle;
  CategoryDef a;
  a.rules = {RuleSpec{Rule::And, Stream::Shape, Attribute::Type}};
  CategoryDef b;
  b.rules = {RuleSpec{Rule::Progression, Stream::Shape, Attribute::Size}};
  CategoryDef c;
  c.rules = {RuleSpec{Rule::Or, Stream::Line, Attribute::Type}};
  cfg.categories = {a, b, c};
  return cfg;
}

LenConfig tiny_len() {
  LenConfig cfg;
  cfg.embed_dim = 8;
  cfg.encoder_hidden = {16};
  cfg.g_hidden = {8};
  cfg.f_hidden = {16};
  return cfg;
}

void set_param(ParameterStore& store, const std::string& name, double v) {
  auto t = store.find(name);
  std::fill(t.mutable_value().begin(), t.mutable_value().end(), v);
}

void set_param(ParameterStore& store, const std::string& name, const std::vector<double>& v) {
  auto t = store.find(name);
  ASSERT_EQ(t.size(), v.size());
  t.mutable_value() = v;
}

// ---------------------------------------------------------------------------
// Triple enumeration

TEST(TripleEnumeration, CountsAndPartition) {
  const auto& ti = TripleIndex::get();
  EXPECT_EQ(ti.rowcol.size(), 6u);
  EXPECT_EQ(ti.others.size(), 78u);

  std::set<std::array<int, 3>> seen;
  auto check = [&](const std::array<int, 3>& t) {
    for (int s : t) {
      EXPECT_GE(s, 0);
      EXPECT_LE(s, 8);
    }
    std::array<int, 3> sorted = t;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_TRUE(sorted[0] < sorted[1] && sorted[1] < sorted[2]);
    EXPECT_TRUE(seen.insert(sorted).second);  // partition is disjoint
  };
  for (const auto& t : ti.rowcol) check(t);
  for (const auto& t : ti.others) check(t);
  EXPECT_EQ(seen.size(), 84u);  // full C(9,3)
}

TEST(TripleEnumeration, RowColTriplesMatchTheListing) {
  const auto& ti = TripleIndex::get();
  const std::vector<std::array<int, 3>> want = {{{0, 1, 2}}, {{3, 4, 5}}, {{6, 7, 8}},
                                                {{0, 3, 6}}, {{1, 4, 7}}, {{2, 5, 8}}};
  EXPECT_EQ(ti.rowcol, want);
  // candidate-bearing row/col triples: last row and last column
  int with_candidate = 0;
  for (const auto& t : ti.rowcol)
    if (t[2] == 8) ++with_candidate;
  EXPECT_EQ(with_candidate, 2);
}

// ---------------------------------------------------------------------------
// Embedding and scoring structure

TEST(LenModel, IdenticalPanelsGetIdenticalEmbeddings) {
  LenModel model(tiny_len(), 5);
  Puzzle pz;
  Panel p;
  p.slots[0] = ShapeObject{1, 2, 3};
  p.slots[5] = ShapeObject{4, 5, 6};
  for (auto& q : pz.context) q = p;
  for (auto& q : pz.choices) q = p;
  const Tensor E = model.embed_panels(pz);
  ASSERT_EQ(E.shape(), (Shape{16, 8}));
  for (std::size_t r = 1; r < 16; ++r)
    for (std::size_t c = 0; c < 8; ++c)
      EXPECT_DOUBLE_EQ(E.value()[r * 8 + c], E.value()[c]);
}

TEST(LenModel, GlobalContextIsPermutationInvariant) {
  LenModel model(tiny_len(), 6);
  Rng rng(7);
  std::vector<double> data(8 * 8);
  for (auto& v : data) v = rng.uniform(-1.0, 1.0);
  const Tensor ctx = Tensor::from({8, 8}, data);
  const Tensor z1 = model.global_context(ctx);
  std::vector<std::size_t> perm{3, 1, 7, 0, 5, 2, 6, 4};
  const Tensor z2 = model.global_context(gather_rows(ctx, perm));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(z1.value()[i], z2.value()[i], 1e-12);

  const Tensor zb = model.global_context(Tensor::zeros({8, 8}));
  const auto bias = model.params().find("z_proj.b");
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(zb.value()[i], bias.value()[i]);

  EXPECT_THROW(model.global_context(Tensor::zeros({7, 8})), ShapeError);
}

TEST(LenModel, UniformScoresOnIdenticalChoices) {
  GeneratorConfig gcfg = small_config();
  Rng rng(11);
  Puzzle pz = generate_puzzle(gcfg, 0, rng);
  for (auto& c : pz.choices) c = pz.choices[0];
  LenModel model(tiny_len(), 12);
  const auto out = model.forward(pz);
  ASSERT_EQ(out.scores.shape(), (Shape{1, 8}));
  ASSERT_EQ(out.probs.shape(), (Shape{1, 8}));
  double total = 0.0;
  for (double p : out.probs.value()) {
    EXPECT_NEAR(p, 0.125, 1e-9);
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(LenModel, ChoicePermutationPermutesScores) {
  GeneratorConfig gcfg = small_config();
  Rng rng(13);
  LenModel model(tiny_len(), 14);
  for (int it = 0; it < 30; ++it) {
    const Puzzle pz = generate_puzzle(gcfg, it % 3, rng);
    const auto base = model.forward(pz);
    std::vector<int> perm{0, 1, 2, 3, 4, 5, 6, 7};
    rng.shuffle(perm);
    Puzzle shuffled = pz;
    for (int k = 0; k < 8; ++k)
      shuffled.choices[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] =
          pz.choices[static_cast<std::size_t>(k)];
    const auto moved = model.forward(shuffled);
    for (int k = 0; k < 8; ++k)
      EXPECT_DOUBLE_EQ(moved.scores.value()[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])],
                       base.scores.value()[static_cast<std::size_t>(k)]);
  }
}

TEST(LenModel, ContextOrderAffectsScores) {
  GeneratorConfig gcfg = small_config();
  Rng rng(15);
  const Puzzle pz = generate_puzzle(gcfg, 1, rng);
  LenModel model(tiny_len(), 16);
  Puzzle swapped = pz;
  std::swap(swapped.context[0], swapped.context[7]);
  const auto a = model.forward(pz);
  const auto b = model.forward(swapped);
  double max_diff = 0.0;
  for (std::size_t k = 0; k < 8; ++k)
    max_diff = std::max(max_diff, std::fabs(a.scores.value()[k] - b.scores.value()[k]));
  EXPECT_GT(max_diff, 1e-9);  // row/column triples are order-structured
}

TEST(LenModel, ForwardMatchesNaiveTripleWalk) {
  GeneratorConfig gcfg = small_config();
  Rng rng(17);
  LenModel model(tiny_len(), 18);
  for (int it = 0; it < 5; ++it) {
    const Puzzle pz = generate_puzzle(gcfg, it % 3, rng);
    const auto out = model.forward(pz);
    const Tensor E = model.embed_panels(pz);
    const Tensor ctx = gather_rows(E, {0, 1, 2, 3, 4, 5, 6, 7});
    const Tensor z = model.global_context(ctx);
    for (std::size_t k = 0; k < 8; ++k) {
      const Tensor ck = gather_rows(E, {8 + k});
      const Tensor s = model.score_choice(ctx, ck, z);
      EXPECT_NEAR(s.item(), out.scores.value()[k], 1e-8);
    }
  }
}

TEST(LenModel, ConstantRelationNetsCollapseScores) {
  LenConfig cfg = tiny_len();
  LenModel model(cfg, 19);
  Rng rng(20);
  std::vector<double> v(static_cast<std::size_t>(cfg.embed_dim));
  for (auto& x : v) x = rng.uniform(-0.5, 0.5);
  // zero the g hidden layers and pin both output biases to v: each relation
  // net then emits exactly v for every triple
  for (const char* g : {"g1", "g2"}) {
    set_param(model.params(), std::string(g) + ".l0.w", 0.0);
    set_param(model.params(), std::string(g) + ".l0.b", 0.0);
    set_param(model.params(), std::string(g) + ".l1.w", 0.0);
    set_param(model.params(), std::string(g) + ".l1.b", v);
  }

  GeneratorConfig gcfg = small_config();
  Rng grng(21);
  const Puzzle pz = generate_puzzle(gcfg, 2, grng);
  const auto out = model.forward(pz);
  for (std::size_t k = 1; k < 8; ++k)
    EXPECT_NEAR(out.scores.value()[k], out.scores.value()[0], 1e-9);

  // manual f(84*v) through the stored parameters
  const auto w0 = model.params().find("f.l0.w");  // [8,16]
  const auto b0 = model.params().find("f.l0.b");
  const auto w1 = model.params().find("f.l1.w");  // [16,1]
  const auto b1 = model.params().find("f.l1.b");
  std::vector<double> h(16, 0.0);
  for (int j = 0; j < 16; ++j) {
    double s = b0.value()[static_cast<std::size_t>(j)];
    for (int i = 0; i < 8; ++i)
      s += 84.0 * v[static_cast<std::size_t>(i)] *
           w0.value()[static_cast<std::size_t>(i * 16 + j)];
    h[static_cast<std::size_t>(j)] = std::max(0.0, s);
  }
  double expect = b1.value()[0];
  for (int j = 0; j < 16; ++j)
    expect += h[static_cast<std::size_t>(j)] * w1.value()[static_cast<std::size_t>(j)];
  EXPECT_NEAR(out.scores.value()[0], expect, 1e-9);

  // uniform probabilities give the analytic chance-level loss
  const Tensor l = model.loss(out, pz.answer);
  EXPECT_NEAR(l.item(), std::log(8.0), 1e-9);
}

// ---------------------------------------------------------------------------
// Loss and gradients

TEST(LenLoss, MatchesManualCrossEntropy) {
  GeneratorConfig gcfg = small_config();
  Rng rng(22);
  const Puzzle pz = generate_puzzle(gcfg, 0, rng);
  LenModel model(tiny_len(), 23);
  const auto out = model.forward(pz);
  const Tensor l = model.loss(out, pz.answer);
  EXPECT_NEAR(l.item(), -std::log(out.probs.value()[static_cast<std::size_t>(pz.answer)]),
              1e-9);
  EXPECT_THROW(model.loss(out, 8), std::invalid_argument);
}

TEST(LenLoss, TypeHeadGetsGradientOnlyWhenWeighted) {
  GeneratorConfig gcfg = small_config();
  Rng rng(24);
  const Puzzle pz = generate_puzzle(gcfg, 0, rng);
  const int vocab = static_cast<int>(enumerate_combinations(Taxonomy::PgmStyle).size());
  const auto labels = type_target(pz, Taxonomy::PgmStyle, vocab);

  for (double beta : {0.0, 10.0}) {
    LenConfig cfg = tiny_len();
    cfg.type_vocab = vocab;
    cfg.type_loss_weight = beta;
    LenModel model(cfg, 25);
    model.params().zero_grad();
    const auto out = model.forward(pz);
    ASSERT_TRUE(out.type_logits.defined());
    EXPECT_EQ(out.type_logits.shape(), (Shape{1, static_cast<std::size_t>(vocab)}));
    const Tensor l = model.loss(out, pz.answer, labels);
    backward(l);
    double head_grad = 0.0, encoder_grad = 0.0;
    for (double g : model.params().find("type_head.w").grad()) head_grad += std::fabs(g);
    for (double g : model.params().find("encoder.l0.w").grad()) encoder_grad += std::fabs(g);
    EXPECT_GT(encoder_grad, 0.0);
    if (beta == 0.0)
      EXPECT_EQ(head_grad, 0.0);
    else
      EXPECT_GT(head_grad, 0.0);
  }
}

TEST(LenGradients, EndToEndFiniteDifference) {
  GeneratorConfig gcfg = small_config();
  Rng grng(26);
  const Puzzle pz = generate_puzzle(gcfg, 0, grng);

  LenConfig cfg;
  cfg.embed_dim = 6;
  cfg.encoder_hidden = {8};
  cfg.g_hidden = {8};
  cfg.f_hidden = {8};
  cfg.type_vocab = static_cast<int>(enumerate_combinations(Taxonomy::PgmStyle).size());
  cfg.type_loss_weight = 10.0;
  LenModel model(cfg, 27);
  const auto labels = type_target(pz, Taxonomy::PgmStyle, cfg.type_vocab);

  auto loss_fn = [&]() -> Tensor {
    const auto out = model.forward(pz);
    return model.loss(out, pz.answer, labels);
  };
  Rng fd_rng(28);
  const auto rep = gradcheck::check_gradients(model.params(), loss_fn, fd_rng, 30);
  EXPECT_LT(rep.max_rel_err, 1e-3) << "worst entry: " << rep.worst;
}

TEST(LenGradients, TwoStreamFiniteDifference) {
  GeneratorConfig gcfg = small_config();
  Rng grng(29);
  const Puzzle pz = generate_puzzle(gcfg, 2, grng);  // line rule: both streams carry signal

  LenConfig cfg;
  cfg.embed_dim = 6;
  cfg.encoder_hidden = {8};
  cfg.g_hidden = {8};
  cfg.f_hidden = {8};
  cfg.two_stream = true;
  LenModel model(cfg, 30);

  auto loss_fn = [&]() -> Tensor {
    const auto out = model.forward(pz);
    return model.loss(out, pz.answer);
  };
  Rng fd_rng(31);
  // h below the distance to the nearest relu kink on this seed
  const auto rep = gradcheck::check_gradients(model.params(), loss_fn, fd_rng, 24, 1e-6);
  EXPECT_LT(rep.max_rel_err, 1e-3) << "worst entry: " << rep.worst;
}

// ---------------------------------------------------------------------------
// Two-stream specifics

TEST(TwoStream, FusionDemandsTwoStreamMode) {
  LenModel single(tiny_len(), 32);
  const Tensor a = Tensor::zeros({1, 8});
  EXPECT_THROW(single.fuse_two_stream(a, a), ConfigMismatch);

  LenConfig cfg = tiny_len();
  cfg.two_stream = true;
  LenModel dual(cfg, 33);
  const Tensor fused = dual.fuse_two_stream(a, a);
  EXPECT_EQ(fused.shape(), (Shape{1, 8}));
}

TEST(TwoStream, ShapeOnlyPuzzleIsWellDefined) {
  GeneratorConfig gcfg = small_config();
  Rng rng(34);
  const Puzzle pz = generate_puzzle(gcfg, 0, rng);  // shape-only category, line block zero
  LenConfig cfg = tiny_len();
  cfg.two_stream = true;
  LenModel model(cfg, 35);
  const auto out = model.forward(pz);
  for (double s : out.scores.value()) EXPECT_TRUE(std::isfinite(s));
  double total = 0.0;
  for (double p : out.probs.value()) total += p;
  EXPECT_NEAR(total, 1.0, 1e-9);
}

// ---------------------------------------------------------------------------
// Config validation and type targets

TEST(LenConfigChecks, RejectsIllegalSetups) {
  {
    LenConfig cfg = tiny_len();
    cfg.embed_dim = 0;
    EXPECT_THROW(LenModel(cfg, 1), std::invalid_argument);
  }
  {
    LenConfig cfg = tiny_len();
    cfg.type_loss_weight = 10.0;  // no vocabulary
    EXPECT_THROW(LenModel(cfg, 1), std::invalid_argument);
  }
  {
    LenConfig cfg = tiny_len();
    cfg.type_loss_weight = -1.0;
    EXPECT_THROW(LenModel(cfg, 1), std::invalid_argument);
  }
  {
    LenConfig cfg = tiny_len();
    cfg.num_choices = 4;
    EXPECT_THROW(LenModel(cfg, 1), std::invalid_argument);
  }
}

TEST(TypeTargets, MultiHotOverCombos) {
  GeneratorConfig gcfg = small_config();
  Rng rng(36);
  const Puzzle pz = generate_puzzle(gcfg, 0, rng);  // conjunction on shape type
  const int vocab = static_cast<int>(enumerate_combinations(Taxonomy::PgmStyle).size());
  const auto t = type_target(pz, Taxonomy::PgmStyle, vocab);
  ASSERT_EQ(t.size(), static_cast<std::size_t>(vocab));
  double ones = 0.0;
  for (double x : t) ones += x;
  EXPECT_EQ(ones, 1.0);
  const int idx = combo_index(Taxonomy::PgmStyle, Rule::And, Stream::Shape, Attribute::Type);
  ASSERT_GT(idx, 0);
  EXPECT_EQ(t[static_cast<std::size_t>(idx)], 1.0);

  // a vocabulary too small to hold the puzzle's combination is rejected
  EXPECT_THROW(type_target(pz, Taxonomy::PgmStyle, idx), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Embedding export

TEST(EmbeddingExport, DeterministicCsv) {
  GeneratorConfig gcfg = small_config();
  gcfg.distraction_mean = 1.0;
  Rng rng(37);
  std::vector<Puzzle> puzzles;
  for (int i = 0; i < 12; ++i) puzzles.push_back(generate_puzzle(gcfg, i % 3, rng));
  LenModel model(tiny_len(), 38);

  const auto dir = std::filesystem::temp_directory_path();
  const auto p1 = dir / "frar_embed_1.csv";
  const auto p2 = dir / "frar_embed_2.csv";
  export_embeddings(model, puzzles, p1.string());
  export_embeddings(model, puzzles, p2.string());

  std::ifstream in(p1);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("id,category,distraction_count,e0,", 0), 0u);
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    const std::size_t commas = static_cast<std::size_t>(
        std::count(line.begin(), line.end(), ','));
    EXPECT_EQ(commas, 2 + static_cast<std::size_t>(tiny_len().embed_dim));
  }
  EXPECT_EQ(rows, 12);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  EXPECT_EQ(s1.str(), s2.str());
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);

  EXPECT_THROW(export_embeddings(model, puzzles, "/nonexistent/dir/x.csv"), IoError);
}

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
