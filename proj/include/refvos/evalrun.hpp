#pragma once

#include <map>
#include <set>
#include <string>

#include "refvos/keyframe.hpp"
#include "refvos/metrics.hpp"
#include "refvos/model.hpp"

namespace refvos {

struct StyleAggregate {
  MetricValues mean;
  int samples = 0;
};

struct EvalRunReport {
  std::string split;
  std::string strategy;
  int tprime = 0;
  StyleAggregate overall;
  std::map<std::string, StyleAggregate> by_style;
};

// Full pipeline per sample: per-frame decode, key-frame selection with the
// given strategy, inter-frame attention on the selected frames, re-applied
// heads there, per-frame heads elsewhere; metrics over every frame.
EvalRunReport evaluate_run(const Model& model, const Dataset& data, Split split,
                           SelectionStrategy strategy = SelectionStrategy::ours,
                           int tprime_override = -1,
                           const std::set<ExpressionStyle>& styles = {});

// Binary per-frame prediction masks for one sample (union of kept queries at
// 0.5, nearest-upsampled to full resolution). Exposed for tests and tools.
std::vector<BinaryMask> predict_sample(const Model& model, const VideoClip& clip,
                                       const ReferringSample& sample, SelectionStrategy strategy,
                                       int tprime_override = -1);

std::string report_to_json(const EvalRunReport& report);
void write_report(const EvalRunReport& report, const std::string& path);

}  // namespace refvos
