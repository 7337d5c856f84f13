#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cuelab/factorspace.hpp"
#include "cuelab/nn.hpp"

namespace cuelab {

// A cue accuracy is only called dominant when it clears chance by this margin.
constexpr double kDominanceMargin = 0.15;

// --- exact evaluation of tabular classifiers over cue cells -----------------

// A classifier defined directly on cue-class tuples (no images involved).
using CellFn = std::function<int(std::span<const int>)>;

struct CellAccuracy {
  int64_t correct = 0;
  int64_t total = 0;
  double value() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

// Accuracy of f against cue k's labels, averaged over all L^K cells, as exact
// integer counts.
CellAccuracy acc_tabular(const CellFn& f, int L, int K, int k);

// --- image-level evaluation ---------------------------------------------------

// Batched predictor over rendered images; must be safe to call concurrently.
using PredictFn = std::function<std::vector<int>(const std::vector<Image>&)>;

PredictFn model_predictor(const nn::Model& model);

struct EvalOptions {
  int n_per_cell = 6;       // samples per cell in sampled mode
  uint64_t seed = 0;
  bool exhaustive = false;  // enumerate every configuration instead of sampling
  bool test_split = true;   // sampled mode draws held-out nuisance configurations
  int jobs = 0;
};

// Per-cell correct-prediction rate against cue k's labels, averaged uniformly
// over all L^K cells.
double unbiased_accuracy(const PredictFn& predict, const FactorSpace& space, const CueSet& cues,
                         const std::string& cue_k, const EvalOptions& opts);

// Accuracy against the shared class index, averaged over the L diagonal cells.
double diagonal_accuracy(const PredictFn& predict, const FactorSpace& space, const CueSet& cues,
                         const EvalOptions& opts);

// 0-1 loss over the full cue-k dataset ("diagonal" = diagonal cells only).
double exhaustive_cue_error(const PredictFn& predict, const FactorSpace& space,
                            const CueSet& cues, const std::string& scheme, int jobs = 0);

struct BiasReport {
  double diagonal_acc = 0.0;
  std::vector<std::pair<std::string, double>> per_cue;
  std::optional<std::string> dominant_cue;
  double epsilon = 0.01;

  double cue_acc(const std::string& cue) const;
};

BiasReport bias_report(const PredictFn& predict, const FactorSpace& space, const CueSet& cues,
                       double epsilon, const EvalOptions& opts);

nlohmann::json bias_report_to_json(const BiasReport& r);
std::vector<std::string> bias_report_csv_header(const CueSet& cues);
std::vector<std::string> bias_report_csv_row(const BiasReport& r, const CueSet& cues);

// --- solution membership -------------------------------------------------------

bool is_solution(const nn::Model& model, const LabeledDataset& dataset, double epsilon);

// Same check against the full enumerated cue dataset rather than a sampled one.
bool is_solution_exhaustive(const nn::Model& model, const FactorSpace& space, const CueSet& cues,
                            const std::string& scheme, double epsilon, int jobs = 0);

// --- dataset/tensor adapters ----------------------------------------------------

nn::Tensor images_tensor(const LabeledDataset& ds);
std::vector<int> labels_of(const LabeledDataset& ds);

}  // namespace cuelab
