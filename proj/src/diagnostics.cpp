#include "cuelab/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cuelab/util.hpp"

namespace cuelab {

namespace {

int64_t ipow(int64_t base, int exp) {
  int64_t v = 1;
  while (exp-- > 0) v *= base;
  return v;
}

void cell_labels_of(int64_t cell, int L, std::span<int> out) {
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<int>(cell % L);
    cell /= L;
  }
}

// Enumerates every raw configuration consistent with a cue cell.
void for_each_cell_config(const FactorSpace& space, const CueSet& cues,
                          std::span<const int> member_labels,
                          const std::function<void(std::span<const int>)>& fn) {
  const size_t nf = space.factors.size();
  std::vector<std::vector<int>> choices(nf);
  for (size_t i = 0; i < nf; ++i) {
    const FactorSpec& f = space.factors[i];
    auto it = std::find(cues.members.begin(), cues.members.end(), f.name);
    if (it == cues.members.end()) {
      choices[i].resize(static_cast<size_t>(f.raw_class_count));
      for (int r = 0; r < f.raw_class_count; ++r) choices[i][static_cast<size_t>(r)] = r;
    } else {
      int k = static_cast<int>(it - cues.members.begin());
      choices[i] = cue_class_support(space, cues, f.name, member_labels[static_cast<size_t>(k)]);
    }
  }
  std::vector<size_t> odo(nf, 0);
  std::vector<int> raw(nf);
  for (;;) {
    for (size_t i = 0; i < nf; ++i) raw[i] = choices[i][odo[i]];
    fn(raw);
    size_t i = 0;
    while (i < nf && ++odo[i] == choices[i].size()) odo[i++] = 0;
    if (i == nf) break;
  }
}

// Correct-prediction rate of a predictor inside one cell, against `target`.
double cell_rate(const PredictFn& predict, const FactorSpace& space, const CueSet& cues,
                 std::span<const int> member_labels, int target, const EvalOptions& opts,
                 uint64_t cell_tag) {
  std::vector<Image> batch;
  int64_t correct = 0, total = 0;
  auto flush = [&] {
    if (batch.empty()) return;
    auto preds = predict(batch);
    for (int p : preds)
      if (p == target) ++correct;
    total += static_cast<int64_t>(batch.size());
    batch.clear();
  };
  if (opts.exhaustive) {
    for_each_cell_config(space, cues, member_labels, [&](std::span<const int> raw) {
      Sample s;
      s.raw_indices.assign(raw.begin(), raw.end());
      batch.push_back(render_sample(space, s));
      if (batch.size() >= 256) flush();
    });
  } else {
    const bool enforce = opts.test_split && split_enforceable(space, cues);
    for (int i = 0; i < opts.n_per_cell; ++i) {
      uint64_t stream = mix_seed(opts.seed, fnv1a64("eval") ^ cell_tag, static_cast<uint64_t>(i));
      Sample s = sample_in_cell(space, cues, member_labels, target, stream, enforce, Split::Test);
      batch.push_back(render_sample(space, s));
      if (batch.size() >= 256) flush();
    }
  }
  flush();
  if (total == 0) throw InternalError("empty evaluation cell");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

CellAccuracy acc_tabular(const CellFn& f, int L, int K, int k) {
  if (L < 2 || K < 1 || k < 0 || k >= K) throw UserError("bad tabular evaluation arguments");
  CellAccuracy acc;
  const int64_t cells = ipow(L, K);
  std::vector<int> labels(static_cast<size_t>(K));
  for (int64_t cell = 0; cell < cells; ++cell) {
    cell_labels_of(cell, L, labels);
    int pred = f(labels);
    if (pred == labels[static_cast<size_t>(k)]) ++acc.correct;
    ++acc.total;
  }
  return acc;
}

PredictFn model_predictor(const nn::Model& model) {
  return [&model](const std::vector<Image>& images) {
    if (images.empty()) return std::vector<int>{};
    const int res = images[0].resolution;
    nn::Tensor batch({static_cast<int>(images.size()), 3, res, res});
    const int64_t stride = static_cast<int64_t>(3) * res * res;
    for (size_t i = 0; i < images.size(); ++i)
      std::copy(images[i].data.begin(), images[i].data.end(),
                batch.data.begin() + static_cast<int64_t>(i) * stride);
    return nn::predict(model, batch);
  };
}

double unbiased_accuracy(const PredictFn& predict, const FactorSpace& space, const CueSet& cues,
                         const std::string& cue_k, const EvalOptions& opts) {
  if (opts.n_per_cell < 1 && !opts.exhaustive) throw UserError("n_per_cell must be >= 1");
  auto it = std::find(cues.members.begin(), cues.members.end(), cue_k);
  if (it == cues.members.end()) throw UserError("cue not in the cue set: " + cue_k);
  const int k = static_cast<int>(it - cues.members.begin());
  const int L = cues.label_count;
  const int K = static_cast<int>(cues.members.size());
  const int64_t cells = ipow(L, K);
  std::vector<double> rates(static_cast<size_t>(cells), 0.0);
  parallel_for(
      cells,
      [&](int64_t cell) {
        std::vector<int> labels(static_cast<size_t>(K));
        cell_labels_of(cell, L, labels);
        rates[static_cast<size_t>(cell)] =
            cell_rate(predict, space, cues, labels, labels[static_cast<size_t>(k)], opts,
                      fnv1a64(cue_k) ^ static_cast<uint64_t>(cell));
      },
      opts.jobs);
  double sum = 0;
  for (double r : rates) sum += r;
  return sum / static_cast<double>(cells);
}

double diagonal_accuracy(const PredictFn& predict, const FactorSpace& space, const CueSet& cues,
                         const EvalOptions& opts) {
  const int L = cues.label_count;
  const int K = static_cast<int>(cues.members.size());
  std::vector<double> rates(static_cast<size_t>(L), 0.0);
  parallel_for(
      L,
      [&](int64_t c) {
        std::vector<int> labels(static_cast<size_t>(K), static_cast<int>(c));
        rates[static_cast<size_t>(c)] =
            cell_rate(predict, space, cues, labels, static_cast<int>(c), opts,
                      fnv1a64("diag") ^ static_cast<uint64_t>(c));
      },
      opts.jobs);
  double sum = 0;
  for (double r : rates) sum += r;
  return sum / static_cast<double>(L);
}

double exhaustive_cue_error(const PredictFn& predict, const FactorSpace& space,
                            const CueSet& cues, const std::string& scheme, int jobs) {
  const int L = cues.label_count;
  const int K = static_cast<int>(cues.members.size());
  const bool diagonal = scheme == "diagonal";
  int k = -1;
  if (!diagonal) {
    auto it = std::find(cues.members.begin(), cues.members.end(), scheme);
    if (it == cues.members.end()) throw UserError("cue not in the cue set: " + scheme);
    k = static_cast<int>(it - cues.members.begin());
  }
  const int64_t cells = diagonal ? L : ipow(L, K);
  std::vector<double> rates(static_cast<size_t>(cells), 0.0);
  EvalOptions opts;
  opts.exhaustive = true;
  parallel_for(
      cells,
      [&](int64_t cell) {
        std::vector<int> labels(static_cast<size_t>(K));
        if (diagonal)
          std::fill(labels.begin(), labels.end(), static_cast<int>(cell));
        else
          cell_labels_of(cell, L, labels);
        int target = diagonal ? static_cast<int>(cell) : labels[static_cast<size_t>(k)];
        rates[static_cast<size_t>(cell)] =
            cell_rate(predict, space, cues, labels, target, opts, static_cast<uint64_t>(cell));
      },
      jobs);
  double sum = 0;
  for (double r : rates) sum += r;
  return 1.0 - sum / static_cast<double>(cells);
}

double BiasReport::cue_acc(const std::string& cue) const {
  for (const auto& [name, acc] : per_cue)
    if (name == cue) return acc;
  throw UserError("cue not present in report: " + cue);
}

BiasReport bias_report(const PredictFn& predict, const FactorSpace& space, const CueSet& cues,
                       double epsilon, const EvalOptions& opts) {
  BiasReport r;
  r.epsilon = epsilon;
  r.diagonal_acc = diagonal_accuracy(predict, space, cues, opts);
  for (const auto& cue : cues.members)
    r.per_cue.emplace_back(cue, unbiased_accuracy(predict, space, cues, cue, opts));
  const double chance = 1.0 / cues.label_count;
  double best = -1;
  std::string best_cue;
  for (const auto& [name, acc] : r.per_cue)
    if (acc > best) {
      best = acc;
      best_cue = name;
    }
  if (best > chance + kDominanceMargin) r.dominant_cue = best_cue;
  return r;
}

nlohmann::json bias_report_to_json(const BiasReport& r) {
  nlohmann::json per_cue = nlohmann::json::object();
  for (const auto& [name, acc] : r.per_cue) per_cue[name] = acc;
  return {{"diagonal_accuracy", r.diagonal_acc},
          {"per_cue", per_cue},
          {"dominant_cue", r.dominant_cue ? nlohmann::json(*r.dominant_cue) : nlohmann::json()},
          {"epsilon", r.epsilon}};
}

std::vector<std::string> bias_report_csv_header(const CueSet& cues) {
  std::vector<std::string> h = {"diagonal_acc"};
  for (const auto& cue : cues.members) h.push_back("acc_" + cue);
  h.push_back("dominant_cue");
  h.push_back("epsilon");
  return h;
}

std::vector<std::string> bias_report_csv_row(const BiasReport& r, const CueSet& cues) {
  std::vector<std::string> row = {fmt_g(r.diagonal_acc)};
  for (const auto& cue : cues.members) row.push_back(fmt_g(r.cue_acc(cue)));
  row.push_back(r.dominant_cue.value_or("none"));
  row.push_back(fmt_g(r.epsilon));
  return row;
}

bool is_solution(const nn::Model& model, const LabeledDataset& dataset, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw UserError("epsilon must be in [0, 1)");
  return nn::zero_one_loss(model, images_tensor(dataset), labels_of(dataset)) <= epsilon;
}

bool is_solution_exhaustive(const nn::Model& model, const FactorSpace& space, const CueSet& cues,
                            const std::string& scheme, double epsilon, int jobs) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw UserError("epsilon must be in [0, 1)");
  return exhaustive_cue_error(model_predictor(model), space, cues, scheme, jobs) <= epsilon;
}

nn::Tensor images_tensor(const LabeledDataset& ds) {
  if (ds.images.empty()) throw UserError("empty dataset");
  const int res = ds.space.resolution;
  nn::Tensor t({static_cast<int>(ds.images.size()), 3, res, res});
  const int64_t stride = static_cast<int64_t>(3) * res * res;
  for (size_t i = 0; i < ds.images.size(); ++i)
    std::copy(ds.images[i].data.begin(), ds.images[i].data.end(),
              t.data.begin() + static_cast<int64_t>(i) * stride);
  return t;
}

std::vector<int> labels_of(const LabeledDataset& ds) {
  std::vector<int> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.push_back(s.label);
  return out;
}

}  // namespace cuelab
