#pragma once

#include <cstdint>
#include <string>

namespace refvos {

struct OptimizerConfig {
  double lr = 3e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int steps = 3000;
  int batch_size = 2;
  int train_clip_len = 16;
  int checkpoint_every = 500;
  int log_every = 25;
};

struct LossWeights {
  double cls = 2.0;
  double bce = 5.0;
  double dice = 5.0;
  double temporal = 1.0;
  double video = 1.0;
  double keyframe = 1.0;
};

struct RunConfig {
  std::int64_t seed = 42;
  int image_h = 96, image_w = 96;
  int num_queries = 5;      // N
  int query_dim = 64;       // C_Q
  int text_dim = 64;        // d
  int mask_dim = 32;        // d_m
  int decoder_layers = 3;   // L
  int num_classes = 3;      // C foreground classes
  int keyframe_count = 8;   // T'
  double threshold = 0.8;   // tau
  int attention_heads = 4;
  int scorer_hidden = 64;   // d_h
  bool masked_attention = true;
  int interframe_blocks = 1;
  bool temporal_pos_embed = false;
  bool deep_supervision = false;
  bool pre_attention_frame_loss = false;
  OptimizerConfig optimizer;
  LossWeights loss_weights;

  void validate() const;  // throws std::invalid_argument naming the field
};

// JSON document mirrors RunConfig field-for-field; unknown keys are rejected.
RunConfig load_config(const std::string& path);
RunConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

}  // namespace refvos
