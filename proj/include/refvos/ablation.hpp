#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "refvos/evalrun.hpp"
#include "refvos/model.hpp"
#include "refvos/train.hpp"

namespace refvos {

struct AblationSpec {
  std::vector<SelectionStrategy> strategies{SelectionStrategy::ours, SelectionStrategy::uniform,
                                            SelectionStrategy::cosine};
  std::vector<int> tprime_values{4, 8, 16};
  Split split = Split::val;
};

struct KeyframeAblation {
  AblationSpec spec;
  // J&F per (strategy, T'), strategy order = spec order
  std::vector<std::vector<double>> jf;
};

// Shared weights across all cells; one evaluation per strategy x T'.
KeyframeAblation ablate_keyframes(const Model& model, const Dataset& data,
                                  const AblationSpec& spec);

std::string keyframe_ablation_json(const KeyframeAblation& result);
// Static line plot, one polyline per strategy over T'.
std::string keyframe_ablation_svg(const KeyframeAblation& result);

struct ExpressionAblationCell {
  MetricValues metrics;
  int samples = 0;
};

struct ExpressionAblation {
  std::vector<std::set<ExpressionStyle>> train_sets;
  std::vector<ExpressionStyle> test_styles;
  // grid[train_set][test_style]
  std::vector<std::vector<ExpressionAblationCell>> grid;
};

// Trains one model per train-style set (same config and seed) and evaluates
// each on every test style of the validation split.
ExpressionAblation ablate_expressions(const RunConfig& cfg, const Dataset& data,
                                      const std::vector<std::set<ExpressionStyle>>& train_sets,
                                      const std::vector<ExpressionStyle>& test_styles,
                                      const std::string& out_dir = "");

std::string expression_ablation_json(const ExpressionAblation& result);

}  // namespace refvos
