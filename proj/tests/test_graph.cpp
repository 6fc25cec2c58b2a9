#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gcvrnn/gradcheck.hpp"
#include "gcvrnn/graph.hpp"
#include "oracles.hpp"

using namespace gcvrnn;

namespace {

ModelConfig small_config(std::size_t d = 4) {
  ModelConfig c;
  c.d_node = d;
  c.d_graph = d;
  c.ec_hidden = 4;
  c.n_max = 8;
  return c;
}

void randomize(ParameterStore& s, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.5);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (double& v : s[i].value.storage()) v = g(rng);
}

Tensor column(std::vector<double> v) {
  Tensor t = Tensor::zeros(v.size(), 1);
  std::copy(v.begin(), v.end(), t.storage().begin());
  return t;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out = Tensor::zeros(t.rows(), t.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < t.cols(); ++c) out(i, c) = t(perm[i], c);
  return out;
}

}  // namespace

TEST(EmbedInputs, VisibleAgentPassesCoordinatesAndFlag) {
  const Tensor in = embedding_input(Tensor::matrix({{2, 3}}), column({1}));
  EXPECT_EQ(in, Tensor::matrix({{2, 3, 1}}));
  std::mt19937_64 rng(1);
  ParameterStore s;
  ModelConfig cfg = small_config(3);
  MsGnn g(s, cfg, rng);
  g.embed_past().first.weight->value = Tensor::identity(3);
  g.embed_past().first.bias->value = Tensor::zeros(1, 3);
  g.embed_past().second.weight->value = Tensor::identity(3);
  g.embed_past().second.bias->value = Tensor::zeros(1, 3);
  Tape tape;
  EXPECT_EQ(g.embed(tape, Tensor::matrix({{2, 3}}), column({1}), Phase::past).value(), Tensor::matrix({{2, 3, 1}}));
}

TEST(EmbedInputs, MissingAgentContributesZeroInput) {
  EXPECT_EQ(embedding_input(Tensor::matrix({{2, 3}}), column({0})), Tensor::matrix({{0, 0, 0}}));
}

TEST(EmbedInputs, FutureRoutesThroughFutureEmbeddingOnly) {
  std::mt19937_64 rng(2);
  ParameterStore s;
  MsGnn g(s, small_config(), rng);
  s.zero_grad();
  Tape tape;
  tape.backward(sum(g.embed(tape, Tensor::matrix({{1, 1}}), Tensor(), Phase::future)));
  double past = 0.0, future = 0.0;
  for (double v : g.embed_past().first.weight->grad.storage()) past += std::abs(v);
  for (double v : g.embed_future().second.bias->grad.storage()) future += std::abs(v);
  EXPECT_EQ(past, 0.0);
  EXPECT_GT(future, 0.0);
}

TEST(EmbedInputs, NanCoordinateIsDataError) {
  EXPECT_THROW(embedding_input(Tensor::matrix({{std::nan(""), 0}}), column({1})), DataError);
}

TEST(StaticAdjacency, Examples) {
  const std::vector<double> m{1, 1, 0};
  const auto s = build_static_adjacency(m);
  EXPECT_EQ(s.adjacency, Tensor::matrix({{0, 1, 0}, {1, 0, 0}, {0, 0, 0}}));
  EXPECT_EQ(s.self_loops, Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 0}}));
  const std::vector<double> none{0, 0};
  EXPECT_EQ(build_static_adjacency(none).adjacency, Tensor::zeros(2, 2));
  EXPECT_EQ(build_static_adjacency(none).self_loops, Tensor::zeros(2, 2));
  const std::vector<double> both{1, 1};
  EXPECT_EQ(build_static_adjacency(both).adjacency, Tensor::matrix({{0, 1}, {1, 0}}));
  EXPECT_EQ(build_static_adjacency(both).self_loops, Tensor::identity(2));
  const std::vector<double> bad{0.5};
  EXPECT_THROW(build_static_adjacency(bad), DataError);
}

TEST(NormalizeStatic, Examples) {
  const std::vector<double> both{1, 1}, one{1}, none{0, 0};
  EXPECT_EQ(normalize_static(build_static_adjacency(both)), Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_EQ(normalize_static(build_static_adjacency(one)), Tensor::matrix({{1}}));
  EXPECT_EQ(normalize_static(build_static_adjacency(none)), Tensor::zeros(2, 2));
}

TEST(NormalizeStatic, LiteralFormUsesOppositeRightExponent) {
  const std::vector<double> m{1, 1, 0};
  // degrees (2,2,1): d_i^-1/2 * d_j^+1/2 on the visible pair
  EXPECT_EQ(normalize_static(build_static_adjacency(m), true), Tensor::matrix({{1, 1, 0}, {1, 1, 0}, {0, 0, 0}}));
}

TEST(NormalizeStatic, SymmetricWithZeroRowsForInvisibleNodes) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution vis(0.5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> m(7);
    for (auto& v : m) v = vis(rng) ? 1.0 : 0.0;
    const auto s = build_static_adjacency(m);
    const Tensor a = normalize_static(s);
    for (std::size_t i = 0; i < 7; ++i) {
      for (std::size_t j = 0; j < 7; ++j) {
        EXPECT_EQ(s.adjacency(i, j), s.adjacency(j, i));
        EXPECT_EQ(a(i, j), a(j, i));
        if (m[i] == 0.0) {
          EXPECT_EQ(a(i, j), 0.0);
          EXPECT_EQ(a(j, i), 0.0);
        }
      }
    }
  }
}

TEST(StGcl, Examples) {
  Tape tape;
  Var f = tape.constant(Tensor::identity(2));
  Var w = tape.constant(Tensor::identity(2));
  const Tensor half = Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_EQ(st_gcl(f, tape.constant(half), w, 2).value(), half);
  EXPECT_EQ(st_gcl(f, tape.constant(Tensor::zeros(2, 2)), w, 2).value(), Tensor::zeros(2, 2));
  EXPECT_EQ(st_gcl(f, tape.constant(half), tape.constant(Tensor::zeros(2, 2)), 2).value(), Tensor::zeros(2, 2));
  EXPECT_THROW(st_gcl(f, tape.constant(half), tape.constant(Tensor::zeros(3, 2)), 2), DimensionError);
}

TEST(StGcl, AllVisibleMatchesBruteForceGcn) {
  std::mt19937_64 rng(4);
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto f = oracle::random_mat(n, 3, rng);
    const auto w = oracle::random_mat(3, 5, rng);
    const std::vector<double> m(n, 1.0);
    Tape tape;
    const Tensor got = st_gcl(tape.constant(oracle::to_tensor(f)),
                              tape.constant(normalize_static(build_static_adjacency(m))),
                              tape.constant(oracle::to_tensor(w)), n)
                           .value();
    const auto expect = oracle::relu(oracle::matmul(oracle::gcn_propagation_full(n), oracle::matmul(f, w)));
    EXPECT_LT(oracle::max_diff(oracle::from(got), expect), 1e-14) << "n=" << n;
  }
}

TEST(DlGcl, Examples) {
  Tape tape;
  Var id = tape.constant(Tensor::identity(2));
  Var f = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(dl_gcl(f, tape.constant(Tensor::matrix({{0, 1}, {1, 0}})), id, 2).value(),
            Tensor::matrix({{3, 4}, {1, 2}}));
  EXPECT_EQ(dl_gcl(f, id, id, 2).value(), f.value());
  EXPECT_EQ(dl_gcl(f, tape.constant(Tensor({2, 2}, -1.0)), id, 2).value(), Tensor::zeros(2, 2));
}

TEST(DlGcl, CapacityExceeded) {
  std::mt19937_64 rng(5);
  ParameterStore s;
  ModelConfig cfg = small_config();
  cfg.n_max = 2;
  MsGnn g(s, cfg, rng);
  Tape tape;
  EXPECT_THROW(g.dl_branch(tape, tape.constant(Tensor::zeros(3, 4)), 3), CapacityError);
}

TEST(EdgeCategories, ExamplesAndSymmetry) {
  const std::vector<double> a{1, 0}, b{1, 1}, c{0, 0};
  EXPECT_EQ(edge_categories(a).at(0, 1), EdgeCategory::one_visible);
  EXPECT_EQ(edge_categories(b).at(0, 1), EdgeCategory::both_visible);
  EXPECT_EQ(edge_categories(c).at(0, 1), EdgeCategory::both_invisible);
  std::mt19937_64 rng(6);
  std::bernoulli_distribution vis(0.5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> m(6);
    for (auto& v : m) v = vis(rng) ? 1.0 : 0.0;
    const auto f = edge_categories(m);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_EQ(f.at(i, j), f.at(j, i));
        const auto h = f.one_hot(i, j);
        EXPECT_EQ(h[0] + h[1] + h[2], 1.0);
      }
    }
  }
}

TEST(EcGcl, Examples) {
  Tape tape;
  std::array<Var, kEdgeCategories> id{tape.constant(Tensor::identity(2)), tape.constant(Tensor::identity(2)),
                                      tape.constant(Tensor::identity(2))};
  Var b = tape.constant(Tensor::zeros(1, 2));
  const std::vector<double> m{1, 0};
  std::vector<EdgeCategoryField> cats{edge_categories(m)};
  Var f = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(ec_gcl(f, id, b, category_indicators(cats), 2).value(), Tensor::matrix({{2, 3}, {2, 3}}));

  std::array<Var, kEdgeCategories> zero{tape.constant(Tensor::zeros(2, 2)), tape.constant(Tensor::zeros(2, 2)),
                                        tape.constant(Tensor::zeros(2, 2))};
  EXPECT_EQ(ec_gcl(f, zero, b, category_indicators(cats), 2).value(), Tensor::zeros(2, 2));

  const std::vector<double> single{1};
  std::vector<EdgeCategoryField> one{edge_categories(single)};
  Var f1 = tape.constant(Tensor::matrix({{5, -7}}));
  EXPECT_EQ(ec_gcl(f1, id, b, category_indicators(one), 1).value(), f1.value());
}

TEST(EcGcl, ThetasHaveExpectedShapeAndZeroMapGivesZeroOutput) {
  std::mt19937_64 rng(7);
  ParameterStore s;
  ModelConfig cfg = small_config();
  cfg.d_graph = 5;
  MsGnn g(s, cfg, rng);
  Tape tape;
  const auto th = g.edge_thetas(tape);
  for (const auto& t : th) EXPECT_EQ(t.value().shape(), (Shape{5, 4}));
  for (double& v : g.ec_map().second.weight->value.storage()) v = 0.0;
  for (double& v : g.ec_map().second.bias->value.storage()) v = 0.0;
  Tape t2;
  const std::vector<double> m{1, 0, 1};
  std::vector<EdgeCategoryField> cats{edge_categories(m)};
  EXPECT_EQ(g.ec_branch(t2, t2.constant(Tensor({3, 4}, 2.0)), cats, 3).value(), Tensor::zeros(3, 5));
}

TEST(Fuse, Examples) {
  Tape tape;
  Var ones = tape.constant(Tensor::matrix({{1}}));
  Var zero = tape.constant(Tensor::matrix({{0}}));
  Var st = tape.constant(Tensor::matrix({{1, 2}}));
  Var dl = tape.constant(Tensor::matrix({{3, 4}}));
  Var one2 = tape.constant(Tensor::row({1, 1}));
  Var zero2 = tape.constant(Tensor::row({0, 0}));
  EXPECT_EQ(fuse(st, dl, dl, one2, zero2, zero2).value(), st.value());
  EXPECT_EQ(fuse(ones, ones, ones, ones, ones, ones).value(), Tensor::matrix({{3}}));
  EXPECT_EQ(fuse(st, dl, std::nullopt, zero2, one2, one2).value(), dl.value());
  EXPECT_THROW(fuse(std::nullopt, std::nullopt, std::nullopt, ones, ones, ones), ConfigError);
  EXPECT_THROW(fuse(st, ones, std::nullopt, one2, ones, ones), DimensionError);
  (void)zero;
}

TEST(MsGnnForward, BranchSelection) {
  std::mt19937_64 rng(8);
  ParameterStore s;
  MsGnn g(s, small_config(), rng);
  randomize(s, rng);
  const Tensor coords = normal_tensor({3, 2}, rng);
  const Tensor mask = column({1, 0, 1});
  const std::size_t n = 3;

  Tape tape;
  Var f = g.embed(tape, coords, mask, Phase::past);
  const Tensor st_only = g.forward(tape, coords, mask, Phase::past, n, {true, false, false}).value();
  const std::vector<double> mv{1, 0, 1};
  Var st = g.st_branch(tape, f, normalize_static(build_static_adjacency(mv)), n);
  EXPECT_EQ(st_only, mul_row(st, tape.parameter(g.alpha())).value());

  std::vector<EdgeCategoryField> cats{edge_categories(mv)};
  Var dl = g.dl_branch(tape, f, n);
  Var ec = g.ec_branch(tape, f, cats, n);
  const Tensor all = g.forward(tape, coords, mask, Phase::past, n, {}).value();
  EXPECT_EQ(all, g.fuse_branches(tape, st, dl, ec).value());

  const Tensor fut_full = g.forward(tape, coords, mask, Phase::future, n, {}).value();
  const Tensor fut_no_ec = g.forward(tape, coords, mask, Phase::future, n, {true, true, false}).value();
  EXPECT_EQ(fut_full, fut_no_ec);

  EXPECT_THROW(g.forward(tape, coords, mask, Phase::past, n, {false, false, false}), ConfigError);
}

TEST(MsGnnForward, FutureStaticBranchTreatsEveryoneAsVisible) {
  std::mt19937_64 rng(9);
  ParameterStore s;
  MsGnn g(s, small_config(), rng);
  randomize(s, rng);
  const Tensor coords = normal_tensor({2, 2}, rng);
  Tape tape;
  const Tensor a = g.forward(tape, coords, column({0, 0}), Phase::future, 2, {true, false, false}).value();
  const Tensor b = g.forward(tape, coords, column({1, 1}), Phase::future, 2, {true, false, false}).value();
  EXPECT_EQ(a, b);
}

TEST(MsGnnProperties, StaticAndEdgeBranchesArePermutationEquivariant) {
  std::mt19937_64 rng(10);
  ParameterStore s;
  MsGnn g(s, small_config(), rng);
  randomize(s, rng);
  const std::size_t n = 6;
  std::bernoulli_distribution vis(0.6);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor features = normal_tensor({n, 4}, rng);
    Tensor mask = Tensor::zeros(n, 1);
    for (double& v : mask.storage()) v = vis(rng) ? 1.0 : 0.0;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (const BranchFlags flags : {BranchFlags{true, false, false}, BranchFlags{false, false, true}}) {
      Tape tape;
      const Tensor base =
          g.forward_from_features(tape, tape.constant(features), mask, Phase::past, n, flags).value();
      const Tensor moved = g.forward_from_features(tape, tape.constant(permute_rows(features, perm)),
                                                   permute_rows(mask, perm), Phase::past, n, flags)
                               .value();
      EXPECT_EQ(moved, permute_rows(base, perm)) << "trial " << trial;
    }
  }
}

TEST(MsGnnProperties, LearnableBranchIsNotPermutationEquivariant) {
  std::mt19937_64 rng(11);
  ParameterStore s;
  MsGnn g(s, small_config(), rng);
  randomize(s, rng);
  const Tensor features = normal_tensor({3, 4}, rng);
  const Tensor mask = column({1, 1, 1});
  const std::vector<std::size_t> perm{2, 0, 1};
  Tape tape;
  const BranchFlags dl{false, true, false};
  const Tensor base = g.forward_from_features(tape, tape.constant(features), mask, Phase::past, 3, dl).value();
  const Tensor moved = g.forward_from_features(tape, tape.constant(permute_rows(features, perm)),
                                               permute_rows(mask, perm), Phase::past, 3, dl)
                           .value();
  EXPECT_GT(max_abs_diff(moved, permute_rows(base, perm)), 1e-6);
}

TEST(MsGnnProperties, GradientsPassFiniteDifference) {
  std::mt19937_64 rng(12);
  ParameterStore s;
  MsGnn g(s, small_config(), rng);
  randomize(s, rng);
  const Tensor coords = normal_tensor({6, 2}, rng);
  const Tensor mask = column({1, 0, 1, 1, 1, 0});
  Tensor head = normal_tensor({1, 4}, rng);
  auto loss = [&](Tape& tape) {
    Var past = g.forward(tape, coords, mask, Phase::past, 3, {});
    Var fut = g.forward(tape, coords, mask, Phase::future, 3, {});
    return add(sum(mul_row(tanh(past), tape.constant(head))), sum(tanh(fut)));
  };
  const auto r = grad_check(loss, s);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
}

TEST(MsGnnProperties, StackedScenesMatchIndividualScenes) {
  std::mt19937_64 rng(13);
  ParameterStore s;
  MsGnn g(s, small_config(), rng);
  randomize(s, rng);
  const Tensor coords = normal_tensor({6, 2}, rng);
  const Tensor mask = column({1, 0, 1, 0, 1, 1});
  Tape tape;
  const Tensor both = g.forward(tape, coords, mask, Phase::past, 3, {}).value();
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor c = Tensor::zeros(3, 2), m = Tensor::zeros(3, 1);
    for (std::size_t i = 0; i < 3; ++i) {
      c(i, 0) = coords(b * 3 + i, 0);
      c(i, 1) = coords(b * 3 + i, 1);
      m(i, 0) = mask(b * 3 + i, 0);
    }
    const Tensor one = g.forward(tape, c, m, Phase::past, 3, {}).value();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(one(i, k), both(b * 3 + i, k));
  }
}
