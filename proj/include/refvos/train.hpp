#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "refvos/losses.hpp"
#include "refvos/model.hpp"
#include "refvos/optimizer.hpp"
#include "refvos/types.hpp"

namespace refvos {

struct TrainOptions {
  std::set<ExpressionStyle> train_styles;  // empty = every style
  std::string out_dir;                     // when set: log.jsonl + checkpoints
  bool echo = true;                        // mirror progress to stdout
};

struct StepLog {
  int step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  Model model;
  OptimizerState opt;
  std::vector<StepLog> log;
};

// Raised when a forward pass degenerates; train() turns it into an abort with
// a diagnostic dump of the offending batch.
struct NonFiniteLossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic single-threaded training; a NaN loss aborts with a diagnostic
// dump of the offending batch.
TrainResult train(const RunConfig& cfg, const Dataset& data, const TrainOptions& opts = {});

// Per-sample loss graph shared by train() and the gradient tests: phase one
// scores all frames without a tape (hard top-T' selection), phase two builds
// the differentiable path on the selected frames only.
struct SampleLossInputs {
  const VideoClip* clip = nullptr;
  const ReferringSample* sample = nullptr;
  int start_frame = 0;
  int frame_count = 0;
};

// The discrete phase-one outcomes: which frames were selected, the detached
// frame embeddings feeding the scorer loss, and the per-video assignment.
// None of these carry gradients.
struct SamplePlan {
  std::vector<int> selected;        // frame indices relative to the window
  Eigen::ArrayXd frame_embeddings;  // [frame_count, C_Q]
  MatchResult match;
};

LossTerms build_sample_loss(const Model& model, const SampleLossInputs& in,
                            SamplePlan* capture_plan = nullptr);

// Rebuilds the loss with the discrete choices pinned; smooth in the
// parameters, which is what a finite-difference check needs.
LossTerms build_sample_loss_pinned(const Model& model, const SampleLossInputs& in,
                                   const SamplePlan& plan);

std::string step_log_json(const StepLog& entry);

}  // namespace refvos
