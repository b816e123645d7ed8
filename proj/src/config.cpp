#include "refvos/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

namespace refvos {

namespace {

using nlohmann::ordered_json;

void reject_unknown(const ordered_json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + where + it.key() + "'");
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config: " + field + " " + why);
  };
  if (image_h <= 0 || image_h % 32 != 0) fail("image_size[0]", "must be a positive multiple of 32");
  if (image_w <= 0 || image_w % 32 != 0) fail("image_size[1]", "must be a positive multiple of 32");
  if (num_queries < 1) fail("num_queries", "must be positive");
  if (query_dim < 1) fail("query_dim", "must be positive");
  if (text_dim < 1) fail("text_dim", "must be positive");
  if (mask_dim < 1) fail("mask_dim", "must be positive");
  if (decoder_layers < 0) fail("decoder_layers", "must be non-negative");
  if (num_classes < 1) fail("num_classes", "must be positive");
  if (keyframe_count < 1) fail("keyframe_count", "must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold", "must lie in (0,1)");
  if (attention_heads < 1 || query_dim % attention_heads != 0)
    fail("attention_heads", "must divide query_dim");
  if (scorer_hidden < 1) fail("scorer_hidden", "must be positive");
  if (interframe_blocks < 0) fail("interframe_blocks", "must be non-negative");
  if (optimizer.lr <= 0.0) fail("optimizer.lr", "must be positive");
  if (optimizer.weight_decay < 0.0) fail("optimizer.weight_decay", "must be non-negative");
  if (optimizer.steps < 0) fail("optimizer.steps", "must be non-negative");
  if (optimizer.batch_size < 1) fail("optimizer.batch_size", "must be positive");
  if (optimizer.train_clip_len < 1) fail("optimizer.train_clip_len", "must be positive");
  if (keyframe_count > optimizer.train_clip_len)
    fail("keyframe_count", "must not exceed optimizer.train_clip_len");
  if (loss_weights.cls < 0 || loss_weights.bce < 0 || loss_weights.dice < 0 ||
      loss_weights.temporal < 0 || loss_weights.video < 0 || loss_weights.keyframe < 0)
    fail("loss_weights", "must be non-negative");
}

RunConfig config_from_json_text(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  RunConfig cfg;

  reject_unknown(j, {"seed", "image_size", "num_queries", "query_dim", "text_dim", "mask_dim",
                     "decoder_layers", "num_classes", "keyframe_count", "threshold",
                     "attention_heads", "scorer_hidden", "masked_attention", "interframe_blocks",
                     "temporal_pos_embed", "deep_supervision", "pre_attention_frame_loss",
                     "optimizer", "loss_weights"},
                 "");

  if (j.contains("seed")) cfg.seed = j["seed"].get<std::int64_t>();
  if (j.contains("image_size")) {
    const auto& sz = j["image_size"];
    if (!sz.is_array() || sz.size() != 2)
      throw std::invalid_argument("config: image_size must be [H, W]");
    cfg.image_h = sz[0].get<int>();
    cfg.image_w = sz[1].get<int>();
  }
  if (j.contains("num_queries")) cfg.num_queries = j["num_queries"].get<int>();
  if (j.contains("query_dim")) cfg.query_dim = j["query_dim"].get<int>();
  if (j.contains("text_dim")) cfg.text_dim = j["text_dim"].get<int>();
  if (j.contains("mask_dim")) cfg.mask_dim = j["mask_dim"].get<int>();
  if (j.contains("decoder_layers")) cfg.decoder_layers = j["decoder_layers"].get<int>();
  if (j.contains("num_classes")) cfg.num_classes = j["num_classes"].get<int>();
  if (j.contains("keyframe_count")) cfg.keyframe_count = j["keyframe_count"].get<int>();
  if (j.contains("threshold")) cfg.threshold = j["threshold"].get<double>();
  if (j.contains("attention_heads")) cfg.attention_heads = j["attention_heads"].get<int>();
  if (j.contains("scorer_hidden")) cfg.scorer_hidden = j["scorer_hidden"].get<int>();
  if (j.contains("masked_attention")) cfg.masked_attention = j["masked_attention"].get<bool>();
  if (j.contains("interframe_blocks")) cfg.interframe_blocks = j["interframe_blocks"].get<int>();
  if (j.contains("temporal_pos_embed")) cfg.temporal_pos_embed = j["temporal_pos_embed"].get<bool>();
  if (j.contains("deep_supervision")) cfg.deep_supervision = j["deep_supervision"].get<bool>();
  if (j.contains("pre_attention_frame_loss"))
    cfg.pre_attention_frame_loss = j["pre_attention_frame_loss"].get<bool>();

  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    reject_unknown(o, {"lr", "weight_decay", "beta1", "beta2", "eps", "steps", "batch_size",
                       "train_clip_len", "checkpoint_every", "log_every"},
                   "optimizer.");
    auto& oc = cfg.optimizer;
    if (o.contains("lr")) oc.lr = o["lr"].get<double>();
    if (o.contains("weight_decay")) oc.weight_decay = o["weight_decay"].get<double>();
    if (o.contains("beta1")) oc.beta1 = o["beta1"].get<double>();
    if (o.contains("beta2")) oc.beta2 = o["beta2"].get<double>();
    if (o.contains("eps")) oc.eps = o["eps"].get<double>();
    if (o.contains("steps")) oc.steps = o["steps"].get<int>();
    if (o.contains("batch_size")) oc.batch_size = o["batch_size"].get<int>();
    if (o.contains("train_clip_len")) oc.train_clip_len = o["train_clip_len"].get<int>();
    if (o.contains("checkpoint_every")) oc.checkpoint_every = o["checkpoint_every"].get<int>();
    if (o.contains("log_every")) oc.log_every = o["log_every"].get<int>();
  }

  if (j.contains("loss_weights")) {
    const auto& w = j["loss_weights"];
    reject_unknown(w, {"cls", "bce", "dice", "temporal", "video", "keyframe"}, "loss_weights.");
    auto& lw = cfg.loss_weights;
    if (w.contains("cls")) lw.cls = w["cls"].get<double>();
    if (w.contains("bce")) lw.bce = w["bce"].get<double>();
    if (w.contains("dice")) lw.dice = w["dice"].get<double>();
    if (w.contains("temporal")) lw.temporal = w["temporal"].get<double>();
    if (w.contains("video")) lw.video = w["video"].get<double>();
    if (w.contains("keyframe")) lw.keyframe = w["keyframe"].get<double>();
  }

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["image_size"] = {cfg.image_h, cfg.image_w};
  j["num_queries"] = cfg.num_queries;
  j["query_dim"] = cfg.query_dim;
  j["text_dim"] = cfg.text_dim;
  j["mask_dim"] = cfg.mask_dim;
  j["decoder_layers"] = cfg.decoder_layers;
  j["num_classes"] = cfg.num_classes;
  j["keyframe_count"] = cfg.keyframe_count;
  j["threshold"] = cfg.threshold;
  j["attention_heads"] = cfg.attention_heads;
  j["scorer_hidden"] = cfg.scorer_hidden;
  j["masked_attention"] = cfg.masked_attention;
  j["interframe_blocks"] = cfg.interframe_blocks;
  j["temporal_pos_embed"] = cfg.temporal_pos_embed;
  j["deep_supervision"] = cfg.deep_supervision;
  j["pre_attention_frame_loss"] = cfg.pre_attention_frame_loss;
  j["optimizer"] = {{"lr", cfg.optimizer.lr},
                    {"weight_decay", cfg.optimizer.weight_decay},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"eps", cfg.optimizer.eps},
                    {"steps", cfg.optimizer.steps},
                    {"batch_size", cfg.optimizer.batch_size},
                    {"train_clip_len", cfg.optimizer.train_clip_len},
                    {"checkpoint_every", cfg.optimizer.checkpoint_every},
                    {"log_every", cfg.optimizer.log_every}};
  j["loss_weights"] = {{"cls", cfg.loss_weights.cls},
                       {"bce", cfg.loss_weights.bce},
                       {"dice", cfg.loss_weights.dice},
                       {"temporal", cfg.loss_weights.temporal},
                       {"video", cfg.loss_weights.video},
                       {"keyframe", cfg.loss_weights.keyframe}};
  return j.dump(2) + "\n";
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << config_to_json_text(cfg);
}

}  // namespace refvos
