#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "cuelab/factorspace.hpp"
#include "cuelab/util.hpp"

using namespace cuelab;

namespace {

// Small space with two clean categorical cues plus positional nuisance.
FactorSpace toy_space(int L = 3) {
  FactorSpace s;
  s.resolution = 16;
  s.factors = {
      {"shape", FactorKind::Categorical, 1, 1},
      {"color", FactorKind::Categorical, L, 1},
      {"pos_x", FactorKind::Categorical, L, 1},
      {"pos_y", FactorKind::Categorical, 3, 1},
      {"scale", FactorKind::Continuous, 4, 1},
  };
  return s;
}

// Recovers the cue class of a sample from its raw index.
int class_of(const FactorSpace& space, const CueSet& cues, const std::string& member,
             const Sample& s) {
  int fi = space.factor_index(member);
  int raw = s.raw_indices[static_cast<size_t>(fi)];
  for (int label = 0; label < cues.label_count; ++label) {
    auto support = cue_class_support(space, cues, member, label);
    if (std::find(support.begin(), support.end(), raw) != support.end()) return label;
  }
  return -1;
}

}  // namespace

TEST_CASE("symmetry collapse folds raw orientation indices") {
  FactorSpec square_orient{"orientation", FactorKind::Categorical, 40, 4};
  CHECK(collapse_symmetry(square_orient, 30) == 0);  // 30 mod 10
  CHECK(effective_class_count(square_orient) == 10);

  FactorSpec plain{"color", FactorKind::Categorical, 10, 1};
  CHECK(collapse_symmetry(plain, 7) == 7);

  FactorSpec ellipse_orient{"orientation", FactorKind::Categorical, 40, 2};
  CHECK(collapse_symmetry(ellipse_orient, 25) == 5);

  FactorSpec bad{"orientation", FactorKind::Categorical, 40, 3};
  CHECK_THROWS_AS(collapse_symmetry(bad, 0), UserError);
  CHECK_THROWS_AS(collapse_symmetry(plain, 10), UserError);
}

TEST_CASE("balanced binning splits sorted values evenly") {
  std::vector<double> v100(100);
  for (int i = 0; i < 100; ++i) v100[static_cast<size_t>(i)] = i + 1;
  auto e2 = bin_balanced(v100, 2);
  REQUIRE(e2.size() == 1);
  CHECK(e2[0] == doctest::Approx(50.5));

  std::vector<double> v9(9);
  for (int i = 0; i < 9; ++i) v9[static_cast<size_t>(i)] = i + 1;
  auto e3 = bin_balanced(v9, 3);
  REQUIRE(e3.size() == 2);
  CHECK(e3[0] == doctest::Approx(3.5));
  CHECK(e3[1] == doctest::Approx(6.5));

  // skewed draws: per-bin counts stay within one of N/L
  std::mt19937_64 rng(7);
  std::exponential_distribution<double> d(1.3);
  std::vector<double> skewed(1000);
  for (auto& x : skewed) x = d(rng);
  std::sort(skewed.begin(), skewed.end());
  auto edges = bin_balanced(skewed, 4);
  std::vector<int> counts(4, 0);
  for (double x : skewed) {
    int bin = 0;
    while (bin < 3 && x > edges[static_cast<size_t>(bin)]) ++bin;
    ++counts[static_cast<size_t>(bin)];
  }
  for (int c : counts) CHECK(std::abs(c - 250) <= 1);

  CHECK_THROWS_AS(bin_balanced({1.0, 1.0, 1.0}, 2), UserError);
  CHECK_THROWS_AS(bin_balanced({1.0, 2.0}, 3), UserError);
}

TEST_CASE("bin bounds agree with the edge construction") {
  auto bounds = bin_bounds(6, 3);
  REQUIRE(bounds.size() == 3);
  CHECK(bounds[0] == std::pair<int, int>{0, 2});
  CHECK(bounds[1] == std::pair<int, int>{2, 4});
  CHECK(bounds[2] == std::pair<int, int>{4, 6});
  auto uneven = bin_bounds(7, 3);
  CHECK(uneven[0].second - uneven[0].first == 3);
  CHECK(uneven[2].second - uneven[2].first == 2);
}

TEST_CASE("cue set label count is the minimum effective class count") {
  FactorSpace desk = desk_space_4cue();
  CueSet cues = make_cue_set(desk, {"shape", "scale", "orientation", "color"});
  CHECK(cues.label_count == 3);
  CHECK(effective_class_count(desk.factor("orientation")) == 3);  // 36 / 12

  FactorSpace two = desk_space_2cue();
  CueSet cues2 = make_cue_set(two, {"color", "orientation"});
  CHECK(cues2.label_count == 3);
  // orientation classes are evenly spaced collapsed representatives
  CHECK(cue_class_support(two, cues2, "orientation", 0) == std::vector<int>{0, 9, 18, 27});
  CHECK(cue_class_support(two, cues2, "orientation", 1) == std::vector<int>{3, 12, 21, 30});
  CHECK(cue_class_support(two, cues2, "orientation", 2) == std::vector<int>{6, 15, 24, 33});
}

TEST_CASE("paper-scale product grid size") {
  // shape x scale x orientation x posx x posy x color
  FactorSpace full;
  full.resolution = 64;
  full.factors = {
      {"shape", FactorKind::Categorical, 3, 1},
      {"scale", FactorKind::Continuous, 6, 1},
      {"orientation", FactorKind::Categorical, 40, 1},
      {"pos_x", FactorKind::Categorical, 32, 1},
      {"pos_y", FactorKind::Categorical, 32, 1},
      {"color", FactorKind::Categorical, 4, 1},
  };
  int64_t cells = 1;
  for (const auto& f : full.factors) cells *= f.raw_class_count;
  CHECK(cells == 2949120);
}

TEST_CASE("diagonal construction is balanced and index-consistent") {
  FactorSpace space = toy_space();
  CueSet cues = make_cue_set(space, {"color", "pos_x"});
  LabeledDataset ds = build_diagonal(space, cues, 10, 42);
  CHECK(ds.samples.size() == 30);
  CHECK(ds.images.size() == 30);

  std::map<int, int> per_class;
  for (const auto& s : ds.samples) {
    ++per_class[s.label];
    // all cue members share the sample's label
    for (const auto& m : cues.members) CHECK(class_of(space, cues, m, s) == s.label);
  }
  for (const auto& [label, n] : per_class) CHECK(n == 10);

  CHECK_THROWS_AS(build_diagonal(space, cues, 0, 1), UserError);
}

TEST_CASE("diagonal of a 3-cue binary grid has two distinct cue tuples") {
  FactorSpace space;
  space.resolution = 16;
  space.factors = {
      {"shape", FactorKind::Categorical, 2, 1},
      {"color", FactorKind::Categorical, 2, 1},
      {"pos_x", FactorKind::Categorical, 2, 1},
      {"pos_y", FactorKind::Categorical, 5, 1},
  };
  CueSet cues = make_cue_set(space, {"shape", "color", "pos_x"});
  CHECK(cues.label_count == 2);
  LabeledDataset ds = build_diagonal(space, cues, 8, 3);
  std::set<std::vector<int>> tuples;
  for (const auto& s : ds.samples) {
    std::vector<int> t;
    for (const auto& m : cues.members) t.push_back(class_of(space, cues, m, s));
    tuples.insert(t);
  }
  CHECK(tuples == std::set<std::vector<int>>{{0, 0, 0}, {1, 1, 1}});
}

TEST_CASE("cue dataset covers every cell with the chosen cue's label") {
  FactorSpace space = toy_space();
  CueSet cues = make_cue_set(space, {"color", "pos_x"});

  LabeledDataset d_color = build_cue_dataset(space, cues, "color", 4, 7);
  CHECK(d_color.samples.size() == 9 * 4);
  std::set<std::pair<int, int>> cells;
  for (const auto& s : d_color.samples) {
    int ci = class_of(space, cues, "color", s);
    int pi = class_of(space, cues, "pos_x", s);
    cells.insert({ci, pi});
    CHECK(s.label == ci);
  }
  CHECK(cells.size() == 9);

  // same grid, same seed, labeled by the other cue: identical image multiset
  LabeledDataset d_pos = build_cue_dataset(space, cues, "pos_x", 4, 7);
  REQUIRE(d_pos.samples.size() == d_color.samples.size());
  for (size_t i = 0; i < d_pos.samples.size(); ++i) {
    CHECK(d_pos.samples[i].raw_indices == d_color.samples[i].raw_indices);
    CHECK(d_pos.samples[i].label == class_of(space, cues, "pos_x", d_pos.samples[i]));
  }
  // diagonal cells carry the same label under either labeling
  for (size_t i = 0; i < d_pos.samples.size(); ++i) {
    const auto& s = d_pos.samples[i];
    if (class_of(space, cues, "color", s) == class_of(space, cues, "pos_x", s))
      CHECK(d_pos.samples[i].label == d_color.samples[i].label);
  }

  CHECK_THROWS_AS(build_cue_dataset(space, cues, "pos_y", 4, 7), UserError);
}

TEST_CASE("binary 3-cue dataset counts") {
  FactorSpace space;
  space.resolution = 16;
  space.factors = {
      {"shape", FactorKind::Categorical, 2, 1},
      {"color", FactorKind::Categorical, 2, 1},
      {"pos_x", FactorKind::Categorical, 2, 1},
      {"pos_y", FactorKind::Categorical, 5, 1},
  };
  CueSet cues = make_cue_set(space, {"shape", "color", "pos_x"});
  LabeledDataset ds = build_cue_dataset(space, cues, "color", 5, 11);
  CHECK(ds.samples.size() == 40);  // 2^3 cells x 5
  int per_label[2] = {0, 0};
  for (const auto& s : ds.samples) ++per_label[s.label];
  CHECK(per_label[0] == 20);
  CHECK(per_label[1] == 20);
}

TEST_CASE("off-diagonal filter removes diagonal cells") {
  FactorSpace space = toy_space();
  CueSet cues = make_cue_set(space, {"color", "pos_x"});
  LabeledDataset ds =
      build_cue_dataset(space, cues, "color", 2, 5, Split::Test, CellFilter::OffDiagonalOnly);
  CHECK(ds.samples.size() == (9 - 3) * 2);
  for (const auto& s : ds.samples)
    CHECK(class_of(space, cues, "color", s) != class_of(space, cues, "pos_x", s));
}

TEST_CASE("datasets are deterministic in (space, cues, seed)") {
  FactorSpace space = desk_space_2cue(16);
  CueSet cues = make_cue_set(space, {"color", "orientation"});
  LabeledDataset a = build_diagonal(space, cues, 12, 99);
  LabeledDataset b = build_diagonal(space, cues, 12, 99);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].raw_indices == b.samples[i].raw_indices);
    CHECK(a.images[i].data == b.images[i].data);
  }
  LabeledDataset c = build_diagonal(space, cues, 12, 100);
  bool any_diff = false;
  for (size_t i = 0; i < a.samples.size(); ++i)
    if (a.samples[i].raw_indices != c.samples[i].raw_indices) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("train and test splits use disjoint nuisance configurations") {
  FactorSpace space = desk_space_2cue(16);
  CueSet cues = make_cue_set(space, {"color", "orientation"});
  REQUIRE(split_enforceable(space, cues));
  LabeledDataset train = build_diagonal(space, cues, 20, 5, Split::Train);
  LabeledDataset test = build_diagonal(space, cues, 20, 5, Split::Test);
  for (const auto& s : train.samples)
    CHECK(nuisance_split(space, cues, s.raw_indices) == Split::Train);
  for (const auto& s : test.samples)
    CHECK(nuisance_split(space, cues, s.raw_indices) == Split::Test);

  // no rendered image can appear on both sides
  std::set<std::vector<float>> train_images;
  for (const auto& img : train.images) train_images.insert(img.data);
  for (const auto& img : test.images) CHECK(train_images.count(img.data) == 0);
}

TEST_CASE("space validation rejects inconsistent definitions") {
  FactorSpace bad = desk_space_4cue();
  bad.factors[2].symmetry_order = 4;  // triangle fold no longer divides it
  CHECK_THROWS_AS(validate_space(bad), UserError);

  FactorSpace dup = desk_space_4cue();
  dup.factors[1].name = "shape";
  CHECK_THROWS_AS(validate_space(dup), UserError);

  FactorSpace unknown = desk_space_4cue();
  unknown.factors[1].name = "texture";
  CHECK_THROWS_AS(validate_space(unknown), UserError);

  FactorSpace one;
  one.resolution = 16;
  one.factors = {{"color", FactorKind::Categorical, 3, 1}};
  CHECK_THROWS_AS(validate_space(one), UserError);
}
