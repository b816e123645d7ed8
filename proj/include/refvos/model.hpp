#pragma once

#include <string>
#include <vector>

#include "refvos/backbone.hpp"
#include "refvos/config.hpp"
#include "refvos/decoder.hpp"
#include "refvos/keyframe.hpp"
#include "refvos/temporal.hpp"
#include "refvos/text_encoder.hpp"
#include "refvos/types.hpp"

namespace refvos {

// Full parameter set; registration order is the checkpoint layout.
struct Model {
  RunConfig cfg;
  ParamRegistry params;
  BackboneParams backbone;
  DecoderParams decoder;
  ScorerParams scorer;
  InterframeParams interframe;

  static Model create(const RunConfig& cfg);

  TextEmbedding encode_text(const std::string& expression) const;
};

// Numeric snapshot of the per-frame pass over a whole clip (no tape).
struct ClipForward {
  int frames = 0;
  int h4 = 0, w4 = 0;
  std::vector<Eigen::ArrayXd> queries;        // [N * C_Q] per frame, final layer
  std::vector<Eigen::ArrayXd> class_logits;   // [N * (C+1)] per frame
  std::vector<Eigen::ArrayXd> mask_probs;     // [N * h4*w4] per frame
  std::vector<Eigen::ArrayXd> mask_features;  // [d_m * h4*w4] per frame
  Eigen::ArrayXd frame_embeddings;            // [T * C_Q]
  std::vector<double> scores;                 // T
};

ClipForward forward_clip(const Model& model, const VideoClip& clip, const TextEmbedding& text,
                         int start_frame = 0, int frame_count = -1);

// Temporally-mixed predictions for a chosen frame subset (no tape).
struct EnhancedForward {
  std::vector<int> selected;
  std::vector<Eigen::ArrayXd> class_logits;  // per selected frame
  std::vector<Eigen::ArrayXd> mask_probs;
};

EnhancedForward enhance_selected(const Model& model, const ClipForward& fwd,
                                 const std::vector<int>& selected, const TextEmbedding& text);

// Bit-exact save/load of parameters plus optimizer state.
struct OptimizerState {
  std::vector<Eigen::ArrayXd> m, v;  // aligned with Model::params items
  std::int64_t step = 0;
};

void save_checkpoint(const Model& model, const OptimizerState& opt, const std::string& path);

// Rebuilds the model from the embedded config; `expected`, when given, must
// match the embedded config field-for-field.
struct Checkpoint {
  Model model;
  OptimizerState opt;
};
Checkpoint load_checkpoint(const std::string& path, const RunConfig* expected = nullptr);

}  // namespace refvos
