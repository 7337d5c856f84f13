#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cuelab/render.hpp"

namespace cuelab {

enum class FactorKind { Categorical, Continuous };

// One axis of the generative grid. Factor names carry rendering semantics:
// shape, scale, orientation, color, pos_x, pos_y.
struct FactorSpec {
  std::string name;
  FactorKind kind = FactorKind::Categorical;
  int raw_class_count = 1;  // grid size (sampling resolution for continuous factors)
  int symmetry_order = 1;   // rotational fold collapsed into one label; 1 = none
};

struct FactorSpace {
  std::vector<FactorSpec> factors;
  int resolution = 32;
  double scale_min = 0.28;
  double scale_max = 0.53;

  int factor_index(const std::string& name) const;  // -1 when absent
  const FactorSpec& factor(const std::string& name) const;
  bool has_factor(const std::string& name) const { return factor_index(name) >= 0; }
};

// Checks name uniqueness, grid sizes, and that the orientation factor's
// symmetry order is compatible with every shape present (each shape's own
// fold must divide it, and it must divide the orientation resolution).
void validate_space(const FactorSpace& space);

// Collapses a raw index by the factor's rotational symmetry:
// collapsed = raw mod (raw_class_count / symmetry_order).
int collapse_symmetry(const FactorSpec& factor, int raw_index);

// Number of distinct labels a factor can support (after symmetry collapse;
// continuous factors count their grid resolution before binning).
int effective_class_count(const FactorSpec& factor);

// Thresholds splitting sorted values into L bins whose counts differ by at
// most one. Throws when there are fewer than L distinct values.
std::vector<double> bin_balanced(const std::vector<double>& sorted_values, int bins);

// [start, end) raw-index ranges realizing the same floor/ceil bin sizes.
std::vector<std::pair<int, int>> bin_bounds(int n, int bins);

struct CueSet {
  std::vector<std::string> members;
  int label_count = 0;  // L
};

// L = smallest effective class count among members; every member is then
// subsampled or interval-binned down to exactly L classes.
CueSet make_cue_set(const FactorSpace& space, std::vector<std::string> members);

// Raw indices realizing class `label` of a cue member.
std::vector<int> cue_class_support(const FactorSpace& space, const CueSet& cues,
                                   const std::string& member, int label);

// Rendering parameters for one grid cell. Factors absent from the space take
// neutral defaults (square, mid scale, angle 0, white, centered).
SpriteParams sprite_from_raw(const FactorSpace& space, std::span<const int> raw_indices);

enum class Split { Train, Test };
enum class CellFilter { All, OffDiagonalOnly };

struct Sample {
  std::vector<int> raw_indices;  // per factor, space order
  int label = 0;                 // 0-based, in [0, L)
};

struct LabeledDataset {
  FactorSpace space;
  CueSet cues;
  std::string scheme;  // "diagonal" or the cue name
  Split split = Split::Train;
  uint64_t seed = 0;
  std::vector<Sample> samples;
  std::vector<Image> images;  // materialized, aligned with samples
};

// Diagonal construction: all cue members share one class index per sample,
// label = that index; factors outside the cue set vary at random.
// n_per_class samples per class, exactly balanced.
LabeledDataset build_diagonal(const FactorSpace& space, const CueSet& cues, int n_per_class,
                              uint64_t seed, Split split = Split::Train);

// Single-cue labeling over the full product of cue classes: every cell gets
// n_per_cell samples, label = the chosen cue's class index.
LabeledDataset build_cue_dataset(const FactorSpace& space, const CueSet& cues,
                                 const std::string& cue, int n_per_cell, uint64_t seed,
                                 Split split = Split::Train,
                                 CellFilter filter = CellFilter::All);

// Train/test membership of one grid configuration. The key canonicalizes
// orientation by the rendered shape's own fold, so bit-identical images can
// never land in both splits.
Split nuisance_split(const FactorSpace& space, const CueSet& cues,
                     std::span<const int> raw_indices);

// Whether the space has enough nuisance variety to honor the split at all.
bool split_enforceable(const FactorSpace& space, const CueSet& cues);

// Draws one configuration from a cue cell: members take a random raw index
// from their class support, other factors vary freely. With enforce_split the
// draw is rejected until its nuisance configuration lands in `split`.
Sample sample_in_cell(const FactorSpace& space, const CueSet& cues,
                      std::span<const int> member_labels, int label, uint64_t stream_seed,
                      bool enforce_split, Split split);

// Renders one sample of a dataset (images are regenerated, never stored on disk).
Image render_sample(const FactorSpace& space, const Sample& sample);

// --- manifests (the unit of exchange; images are procedural) ---------------

nlohmann::json space_to_json(const FactorSpace& space);
FactorSpace space_from_json(const nlohmann::json& j);

struct ManifestSpec {
  FactorSpace space;
  std::vector<std::string> cue_members;
  std::string scheme;  // "diagonal" or cue name
  Split split = Split::Train;
  CellFilter filter = CellFilter::All;
  int count = 0;  // n_per_class (diagonal) or n_per_cell (cue)
  uint64_t seed = 0;
};

nlohmann::json manifest_to_json(const ManifestSpec& m);
ManifestSpec manifest_from_json(const nlohmann::json& j);
LabeledDataset dataset_from_manifest(const ManifestSpec& m);

// Built-in desk-scale spaces.
FactorSpace desk_space_4cue(int resolution = 32);  // 3 shapes, 6 scales, 36 orientations, 4 colors, 5x5 positions
FactorSpace desk_space_2cue(int resolution = 32);  // squares only, 3 colors; for color/orientation studies

}  // namespace cuelab
