#include "cuelab/factorspace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "cuelab/util.hpp"

namespace cuelab {

namespace {

const std::set<std::string> kKnownFactors = {"shape", "scale", "orientation",
                                             "color",  "pos_x", "pos_y"};

// Shapes present in a space, in raw-index order: square, ellipse, triangle.
std::vector<Shape> shapes_in_space(const FactorSpace& space) {
  int n = 1;
  int idx = space.factor_index("shape");
  if (idx >= 0) n = space.factors[static_cast<size_t>(idx)].raw_class_count;
  std::vector<Shape> out;
  for (int i = 0; i < n; ++i) out.push_back(static_cast<Shape>(i));
  return out;
}

int checked_cue_index(const CueSet& cues, const std::string& name) {
  auto it = std::find(cues.members.begin(), cues.members.end(), name);
  if (it == cues.members.end()) throw UserError("cue not in the cue set: " + name);
  return static_cast<int>(it - cues.members.begin());
}

}  // namespace

int FactorSpace::factor_index(const std::string& name) const {
  for (size_t i = 0; i < factors.size(); ++i)
    if (factors[i].name == name) return static_cast<int>(i);
  return -1;
}

const FactorSpec& FactorSpace::factor(const std::string& name) const {
  int idx = factor_index(name);
  if (idx < 0) throw UserError("no such factor: " + name);
  return factors[static_cast<size_t>(idx)];
}

void validate_space(const FactorSpace& space) {
  if (space.factors.size() < 2) throw UserError("a factor space needs at least 2 factors");
  if (space.resolution < 4) throw UserError("resolution too small");
  if (!(space.scale_min >= 0.2 && space.scale_max <= 0.9 && space.scale_min <= space.scale_max))
    throw UserError("scale range must lie within [0.2, 0.9]");
  std::set<std::string> names;
  for (const auto& f : space.factors) {
    if (!names.insert(f.name).second) throw UserError("duplicate factor name: " + f.name);
    if (!kKnownFactors.count(f.name)) throw UserError("unknown factor name: " + f.name);
    if (f.raw_class_count < 1) throw UserError("raw_class_count must be >= 1: " + f.name);
    if (f.symmetry_order < 1) throw UserError("symmetry_order must be >= 1: " + f.name);
    if (f.raw_class_count % f.symmetry_order != 0)
      throw UserError("symmetry_order must divide raw_class_count: " + f.name);
    if (f.name == "shape" && f.raw_class_count > 3)
      throw UserError("at most 3 shapes are available");
    if (f.name == "color" && f.raw_class_count > kPaletteSize)
      throw UserError("at most 4 palette colors are available");
  }
  int oi = space.factor_index("orientation");
  if (oi >= 0) {
    const auto& of = space.factors[static_cast<size_t>(oi)];
    for (Shape s : shapes_in_space(space)) {
      if (of.symmetry_order % shape_symmetry(s) != 0)
        throw UserError(std::string("orientation symmetry_order must be a multiple of the ") +
                        shape_name(s) + " fold");
    }
  }
}

int collapse_symmetry(const FactorSpec& factor, int raw_index) {
  if (factor.raw_class_count % factor.symmetry_order != 0)
    throw UserError("symmetry_order must divide raw_class_count: " + factor.name);
  if (raw_index < 0 || raw_index >= factor.raw_class_count)
    throw UserError("raw index out of range for factor " + factor.name);
  return raw_index % (factor.raw_class_count / factor.symmetry_order);
}

int effective_class_count(const FactorSpec& factor) {
  return factor.raw_class_count / factor.symmetry_order;
}

std::vector<double> bin_balanced(const std::vector<double>& sorted_values, int bins) {
  const int n = static_cast<int>(sorted_values.size());
  if (bins < 1) throw UserError("bin count must be >= 1");
  if (n < bins) throw UserError("fewer values than bins");
  for (int i = 1; i < n; ++i)
    if (sorted_values[static_cast<size_t>(i)] < sorted_values[static_cast<size_t>(i - 1)])
      throw UserError("values must be sorted");
  int distinct = 1;
  for (int i = 1; i < n; ++i)
    if (sorted_values[static_cast<size_t>(i)] != sorted_values[static_cast<size_t>(i - 1)])
      ++distinct;
  if (distinct < bins) throw UserError("fewer distinct values than bins");

  auto bounds = bin_bounds(n, bins);
  std::vector<double> edges;
  for (int j = 0; j + 1 < bins; ++j) {
    int cut = bounds[static_cast<size_t>(j)].second;  // first index of the next bin
    edges.push_back(0.5 * (sorted_values[static_cast<size_t>(cut - 1)] +
                           sorted_values[static_cast<size_t>(cut)]));
  }
  return edges;
}

std::vector<std::pair<int, int>> bin_bounds(int n, int bins) {
  std::vector<std::pair<int, int>> out;
  int base = n / bins, rem = n % bins;
  int start = 0;
  for (int j = 0; j < bins; ++j) {
    int size = base + (j < rem ? 1 : 0);
    out.emplace_back(start, start + size);
    start += size;
  }
  return out;
}

CueSet make_cue_set(const FactorSpace& space, std::vector<std::string> members) {
  validate_space(space);
  if (members.empty()) throw UserError("cue set must not be empty");
  std::set<std::string> uniq(members.begin(), members.end());
  if (uniq.size() != members.size()) throw UserError("duplicate cue member");
  int L = std::numeric_limits<int>::max();
  for (const auto& name : members) L = std::min(L, effective_class_count(space.factor(name)));
  if (L < 2) throw UserError("cue set needs at least 2 classes per member");
  return CueSet{std::move(members), L};
}

std::vector<int> cue_class_support(const FactorSpace& space, const CueSet& cues,
                                   const std::string& member, int label) {
  checked_cue_index(cues, member);
  if (label < 0 || label >= cues.label_count) throw UserError("label out of range");
  const FactorSpec& f = space.factor(member);
  const int L = cues.label_count;
  if (f.kind == FactorKind::Continuous) {
    auto bounds = bin_bounds(f.raw_class_count, L);
    auto [lo, hi] = bounds[static_cast<size_t>(label)];
    std::vector<int> out;
    for (int i = lo; i < hi; ++i) out.push_back(i);
    return out;
  }
  const int collapsed = effective_class_count(f);
  // evenly spaced pick of L collapsed classes, then all symmetry copies
  int rep = static_cast<int>((static_cast<int64_t>(label) * collapsed) / L);
  std::vector<int> out;
  for (int m = 0; m < f.symmetry_order; ++m) out.push_back(rep + m * collapsed);
  return out;
}

SpriteParams sprite_from_raw(const FactorSpace& space, std::span<const int> raw_indices) {
  if (raw_indices.size() != space.factors.size())
    throw UserError("raw index tuple length mismatch");
  SpriteParams p;
  p.scale = 0.5 * (space.scale_min + space.scale_max);
  for (size_t i = 0; i < space.factors.size(); ++i) {
    const FactorSpec& f = space.factors[i];
    int raw = raw_indices[i];
    if (raw < 0 || raw >= f.raw_class_count)
      throw UserError("raw index out of range for factor " + f.name);
    if (f.name == "shape") {
      p.shape = static_cast<Shape>(raw);
    } else if (f.name == "scale") {
      p.scale = f.raw_class_count == 1
                    ? 0.5 * (space.scale_min + space.scale_max)
                    : space.scale_min + raw * (space.scale_max - space.scale_min) /
                                            (f.raw_class_count - 1);
    } else if (f.name == "orientation") {
      p.orientation = 2.0 * std::numbers::pi * raw / f.raw_class_count;
    } else if (f.name == "color") {
      p.color = raw;
    } else if (f.name == "pos_x") {
      p.offset_x = raw - (f.raw_class_count - 1) / 2.0;
    } else if (f.name == "pos_y") {
      p.offset_y = raw - (f.raw_class_count - 1) / 2.0;
    }
  }
  return p;
}

Image render_sample(const FactorSpace& space, const Sample& sample) {
  return render(sprite_from_raw(space, sample.raw_indices), space.resolution);
}

namespace {

// Canonical form of a raw tuple: orientation reduced by the fold of the shape
// actually rendered, so tuples mapping to the same bitmap share a key.
std::vector<int> canonical_tuple(const FactorSpace& space, std::span<const int> raw) {
  std::vector<int> out(raw.begin(), raw.end());
  int oi = space.factor_index("orientation");
  if (oi < 0) return out;
  Shape shape = Shape::Square;
  int si = space.factor_index("shape");
  if (si >= 0) shape = static_cast<Shape>(raw[static_cast<size_t>(si)]);
  const FactorSpec& of = space.factors[static_cast<size_t>(oi)];
  int period = of.raw_class_count / shape_symmetry(shape);
  out[static_cast<size_t>(oi)] %= period;
  return out;
}

uint64_t hash_ints(std::span<const int> v) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (int x : v) {
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<unsigned char>(x >> (8 * b));
      h *= 0x100000001b3ULL;
    }
  }
  return splitmix64(h);
}

// Nuisance content of a configuration: raw indices outside the cue set plus
// the within-class position of each member; cue class identity is excluded.
std::vector<int> nuisance_key(const FactorSpace& space, const CueSet& cues,
                              std::span<const int> raw) {
  std::vector<int> canon = canonical_tuple(space, raw);
  std::vector<int> key;
  for (size_t i = 0; i < space.factors.size(); ++i) {
    const FactorSpec& f = space.factors[i];
    bool member = std::find(cues.members.begin(), cues.members.end(), f.name) !=
                  cues.members.end();
    if (!member) {
      key.push_back(canon[i]);
      continue;
    }
    if (f.kind == FactorKind::Continuous) {
      auto bounds = bin_bounds(f.raw_class_count, cues.label_count);
      int raw_i = raw[i];
      for (const auto& [lo, hi] : bounds)
        if (raw_i >= lo && raw_i < hi) {
          key.push_back(raw_i - lo);
          break;
        }
    } else {
      // within-class ordinal after canonicalization
      int collapsed = effective_class_count(f);
      key.push_back(canon[i] / std::max(1, collapsed));
    }
  }
  return key;
}

}  // namespace

Split nuisance_split(const FactorSpace& space, const CueSet& cues,
                     std::span<const int> raw_indices) {
  auto key = nuisance_key(space, cues, raw_indices);
  return (hash_ints(key) & 1) == 0 ? Split::Train : Split::Test;
}

bool split_enforceable(const FactorSpace& space, const CueSet& cues) {
  for (const auto& f : space.factors) {
    bool member = std::find(cues.members.begin(), cues.members.end(), f.name) !=
                  cues.members.end();
    if (!member && f.raw_class_count >= 2) return true;
    if (member) {
      if (f.kind == FactorKind::Continuous &&
          f.raw_class_count >= 2 * cues.label_count)
        return true;
      if (f.kind == FactorKind::Categorical && f.name == "orientation" &&
          f.symmetry_order >= 2 && f.raw_class_count / effective_class_count(f) >= 2)
        return true;
    }
  }
  return false;
}

Sample sample_in_cell(const FactorSpace& space, const CueSet& cues,
                      std::span<const int> member_labels, int label, uint64_t stream_seed,
                      bool enforce_split, Split split) {
  auto rng = std::mt19937_64(stream_seed);
  Sample s;
  s.label = label;
  const int attempts = enforce_split ? 512 : 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    s.raw_indices.assign(space.factors.size(), 0);
    for (size_t i = 0; i < space.factors.size(); ++i) {
      const FactorSpec& f = space.factors[i];
      auto it = std::find(cues.members.begin(), cues.members.end(), f.name);
      if (it == cues.members.end()) {
        std::uniform_int_distribution<int> d(0, f.raw_class_count - 1);
        s.raw_indices[i] = d(rng);
      } else {
        int k = static_cast<int>(it - cues.members.begin());
        auto support =
            cue_class_support(space, cues, f.name, member_labels[static_cast<size_t>(k)]);
        std::uniform_int_distribution<size_t> d(0, support.size() - 1);
        s.raw_indices[i] = support[d(rng)];
      }
    }
    if (!enforce_split || nuisance_split(space, cues, s.raw_indices) == split) return s;
  }
  throw UserError("cannot satisfy the train/test nuisance split; space too small");
}

namespace {

void validate_cues(const FactorSpace& space, const CueSet& cues) {
  if (cues.members.empty()) throw UserError("cue set must not be empty");
  if (cues.label_count < 2) throw UserError("cue set needs at least 2 classes");
  for (const auto& m : cues.members)
    if (cues.label_count > effective_class_count(space.factor(m)))
      throw UserError("label count exceeds the classes of cue " + m);
}

}  // namespace

LabeledDataset build_diagonal(const FactorSpace& space, const CueSet& cues, int n_per_class,
                              uint64_t seed, Split split) {
  validate_space(space);
  validate_cues(space, cues);
  if (n_per_class < 1) throw UserError("n_per_class must be >= 1");

  LabeledDataset ds;
  ds.space = space;
  ds.cues = cues;
  ds.scheme = "diagonal";
  ds.split = split;
  ds.seed = seed;

  const bool enforce = split_enforceable(space, cues);
  const int L = cues.label_count;
  std::vector<int> member_labels(cues.members.size());
  for (int c = 0; c < L; ++c) {
    std::fill(member_labels.begin(), member_labels.end(), c);
    for (int i = 0; i < n_per_class; ++i) {
      uint64_t stream = mix_seed(seed, fnv1a64("diag") ^ static_cast<uint64_t>(c),
                                 static_cast<uint64_t>(i) * 2 + (split == Split::Test));
      ds.samples.push_back(sample_in_cell(space, cues, member_labels, c, stream, enforce, split));
    }
  }
  ds.images.reserve(ds.samples.size());
  for (const auto& s : ds.samples) ds.images.push_back(render_sample(space, s));
  return ds;
}

LabeledDataset build_cue_dataset(const FactorSpace& space, const CueSet& cues,
                                 const std::string& cue, int n_per_cell, uint64_t seed,
                                 Split split, CellFilter filter) {
  validate_space(space);
  validate_cues(space, cues);
  if (n_per_cell < 1) throw UserError("n_per_cell must be >= 1");
  const int k = checked_cue_index(cues, cue);
  const int L = cues.label_count;
  const int K = static_cast<int>(cues.members.size());

  LabeledDataset ds;
  ds.space = space;
  ds.cues = cues;
  ds.scheme = cue;
  ds.split = split;
  ds.seed = seed;

  const bool enforce = split_enforceable(space, cues);
  int64_t cell_count = 1;
  for (int i = 0; i < K; ++i) cell_count *= L;
  std::vector<int> member_labels(static_cast<size_t>(K));
  for (int64_t cell = 0; cell < cell_count; ++cell) {
    int64_t rest = cell;
    bool diagonal = true;
    for (int i = 0; i < K; ++i) {
      member_labels[static_cast<size_t>(i)] = static_cast<int>(rest % L);
      rest /= L;
      if (member_labels[static_cast<size_t>(i)] != member_labels[0]) diagonal = false;
    }
    if (filter == CellFilter::OffDiagonalOnly && diagonal) continue;
    for (int i = 0; i < n_per_cell; ++i) {
      uint64_t stream = mix_seed(seed, fnv1a64("cue") ^ static_cast<uint64_t>(cell),
                                 static_cast<uint64_t>(i) * 2 + (split == Split::Test));
      ds.samples.push_back(sample_in_cell(space, cues, member_labels,
                                          member_labels[static_cast<size_t>(k)], stream,
                                          enforce, split));
    }
  }
  ds.images.reserve(ds.samples.size());
  for (const auto& s : ds.samples) ds.images.push_back(render_sample(space, s));
  return ds;
}

// --- manifests ---------------------------------------------------------------

nlohmann::json space_to_json(const FactorSpace& space) {
  nlohmann::json j;
  j["resolution"] = space.resolution;
  j["scale_range"] = {space.scale_min, space.scale_max};
  j["factors"] = nlohmann::json::array();
  for (const auto& f : space.factors) {
    j["factors"].push_back({{"name", f.name},
                            {"kind", f.kind == FactorKind::Continuous ? "continuous" : "categorical"},
                            {"raw_class_count", f.raw_class_count},
                            {"symmetry_order", f.symmetry_order}});
  }
  return j;
}

FactorSpace space_from_json(const nlohmann::json& j) {
  FactorSpace s;
  try {
    s.resolution = j.at("resolution").get<int>();
    if (j.contains("scale_range")) {
      s.scale_min = j.at("scale_range").at(0).get<double>();
      s.scale_max = j.at("scale_range").at(1).get<double>();
    }
    for (const auto& fj : j.at("factors")) {
      FactorSpec f;
      f.name = fj.at("name").get<std::string>();
      std::string kind = fj.value("kind", "categorical");
      if (kind != "categorical" && kind != "continuous")
        throw UserError("factor kind must be categorical or continuous");
      f.kind = kind == "continuous" ? FactorKind::Continuous : FactorKind::Categorical;
      f.raw_class_count = fj.at("raw_class_count").get<int>();
      f.symmetry_order = fj.value("symmetry_order", 1);
      s.factors.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("bad factor space json: ") + e.what());
  }
  validate_space(s);
  return s;
}

nlohmann::json manifest_to_json(const ManifestSpec& m) {
  nlohmann::json j;
  j["format"] = "cuelab-manifest-v1";
  j["space"] = space_to_json(m.space);
  j["cues"] = m.cue_members;
  j["scheme"] = m.scheme;
  j["split"] = m.split == Split::Train ? "train" : "test";
  j["cell_filter"] = m.filter == CellFilter::All ? "all" : "off_diagonal";
  j["count"] = m.count;
  j["seed"] = m.seed;
  j["labels"] = "0-based";
  return j;
}

ManifestSpec manifest_from_json(const nlohmann::json& j) {
  ManifestSpec m;
  try {
    if (j.at("format").get<std::string>() != "cuelab-manifest-v1")
      throw UserError("unsupported manifest format");
    m.space = space_from_json(j.at("space"));
    m.cue_members = j.at("cues").get<std::vector<std::string>>();
    m.scheme = j.at("scheme").get<std::string>();
    std::string split = j.at("split").get<std::string>();
    if (split != "train" && split != "test") throw UserError("split must be train or test");
    m.split = split == "train" ? Split::Train : Split::Test;
    std::string filter = j.value("cell_filter", "all");
    if (filter != "all" && filter != "off_diagonal")
      throw UserError("cell_filter must be all or off_diagonal");
    m.filter = filter == "all" ? CellFilter::All : CellFilter::OffDiagonalOnly;
    m.count = j.at("count").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("bad manifest json: ") + e.what());
  }
  return m;
}

LabeledDataset dataset_from_manifest(const ManifestSpec& m) {
  CueSet cues = make_cue_set(m.space, m.cue_members);
  if (m.scheme == "diagonal") return build_diagonal(m.space, cues, m.count, m.seed, m.split);
  return build_cue_dataset(m.space, cues, m.scheme, m.count, m.seed, m.split, m.filter);
}

FactorSpace desk_space_4cue(int resolution) {
  FactorSpace s;
  s.resolution = resolution;
  s.factors = {
      {"shape", FactorKind::Categorical, 3, 1},
      {"scale", FactorKind::Continuous, 6, 1},
      {"orientation", FactorKind::Categorical, 36, 12},  // lcm of the three shape folds
      {"color", FactorKind::Categorical, 4, 1},
      {"pos_x", FactorKind::Categorical, 5, 1},
      {"pos_y", FactorKind::Categorical, 5, 1},
  };
  validate_space(s);
  return s;
}

FactorSpace desk_space_2cue(int resolution) {
  FactorSpace s;
  s.resolution = resolution;
  s.factors = {
      {"shape", FactorKind::Categorical, 1, 1},  // squares only
      {"scale", FactorKind::Continuous, 6, 1},
      {"orientation", FactorKind::Categorical, 36, 4},
      {"color", FactorKind::Categorical, 3, 1},
      {"pos_x", FactorKind::Categorical, 5, 1},
      {"pos_y", FactorKind::Categorical, 5, 1},
  };
  validate_space(s);
  return s;
}

}  // namespace cuelab
