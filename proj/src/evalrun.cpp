#include "refvos/evalrun.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace refvos {

namespace {

BinaryMask union_mask_full_res(const Eigen::ArrayXd& class_logits, const Eigen::ArrayXd& probs,
                               const RunConfig& cfg, int h4, int w4, int h, int w) {
  const auto kept = select_queries(class_logits, cfg.num_queries, cfg.num_classes, cfg.threshold);
  BinaryMask out{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
  for (int q = 0; q < cfg.num_queries; ++q) {
    if (!kept[q]) continue;
    const double* row = probs.data() + static_cast<std::int64_t>(q) * h4 * w4;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (row[(y / 4) * w4 + (x / 4)] >= 0.5) out.grid[static_cast<std::size_t>(y) * w + x] = 1;
  }
  return out;
}

}  // namespace

std::vector<BinaryMask> predict_sample(const Model& model, const VideoClip& clip,
                                       const ReferringSample& sample, SelectionStrategy strategy,
                                       int tprime_override) {
  const RunConfig& cfg = model.cfg;
  const TextEmbedding text = model.encode_text(sample.expression);
  const ClipForward fwd = forward_clip(model, clip, text);
  const int tprime = tprime_override > 0 ? tprime_override : cfg.keyframe_count;

  std::vector<int> selected;
  if (strategy == SelectionStrategy::ours) {
    selected = select_top_frames(fwd.scores, tprime);
  } else {
    // cosine ranks frame embeddings against W_init * F_text
    Eigen::ArrayXd text_proj = Eigen::ArrayXd::Zero(cfg.query_dim);
    const ad::Array& w = model.decoder.w_init.value();
    for (int i = 0; i < cfg.query_dim; ++i)
      for (int j = 0; j < cfg.text_dim; ++j)
        text_proj[i] += w[static_cast<std::int64_t>(i) * cfg.text_dim + j] * text.vector[j];
    selected = baseline_select(strategy, fwd.frame_embeddings, fwd.frames, cfg.query_dim,
                               text_proj, tprime);
  }

  const EnhancedForward enhanced = enhance_selected(model, fwd, selected, text);
  std::vector<int> position(fwd.frames, -1);
  for (std::size_t i = 0; i < selected.size(); ++i) position[selected[i]] = static_cast<int>(i);

  // Only the selected key frames receive segmentations; everything else is
  // empty. Selection quality therefore shows up directly in the metrics:
  // missing a frame where the target is visible forfeits that frame, and a
  // frame without the target is free only when the model stays silent.
  std::vector<BinaryMask> out;
  out.reserve(fwd.frames);
  for (int t = 0; t < fwd.frames; ++t) {
    if (position[t] < 0) {
      out.push_back(BinaryMask{clip.height, clip.width,
                               std::vector<std::uint8_t>(
                                   static_cast<std::size_t>(clip.height) * clip.width, 0)});
      continue;
    }
    out.push_back(union_mask_full_res(enhanced.class_logits[position[t]],
                                      enhanced.mask_probs[position[t]], cfg, fwd.h4, fwd.w4,
                                      clip.height, clip.width));
  }
  return out;
}

EvalRunReport evaluate_run(const Model& model, const Dataset& data, Split split,
                           SelectionStrategy strategy, int tprime_override,
                           const std::set<ExpressionStyle>& styles) {
  EvalRunReport report;
  report.split = split == Split::train ? "train"
               : split == Split::val   ? "val"
               : split == Split::test  ? "test"
                                       : "all";
  report.strategy = to_string(strategy);
  report.tprime = tprime_override > 0 ? tprime_override : model.cfg.keyframe_count;

  auto accumulate = [](StyleAggregate& agg, const MetricValues& v) {
    agg.mean.j += v.j;
    agg.mean.f += v.f;
    agg.mean.jf += v.jf;
    agg.mean.dice += v.dice;
    agg.mean.iou += v.iou;
    agg.samples += 1;
  };
  auto finalize = [](StyleAggregate& agg) {
    if (agg.samples == 0) return;
    const double inv = 1.0 / agg.samples;
    agg.mean.j *= inv;
    agg.mean.f *= inv;
    agg.mean.jf *= inv;
    agg.mean.dice *= inv;
    agg.mean.iou *= inv;
  };

  for (const int ci : split_indices(data, split)) {
    const ClipEntry& entry = data[ci];
    for (const ReferringSample& sample : entry.samples) {
      if (!styles.empty() && !styles.count(sample.style)) continue;
      const auto predictions = predict_sample(model, entry.clip, sample, strategy, tprime_override);
      const EvalReport er = evaluate(predictions, entry.clip, sample.target_ids);
      accumulate(report.overall, er.aggregate);
      accumulate(report.by_style[to_string(sample.style)], er.aggregate);
    }
  }
  finalize(report.overall);
  for (auto& [style, agg] : report.by_style) {
    (void)style;
    finalize(agg);
  }
  return report;
}

namespace {

nlohmann::ordered_json metrics_json(const StyleAggregate& agg) {
  return {{"J", agg.mean.j},       {"F", agg.mean.f},     {"JF", agg.mean.jf},
          {"Dice", agg.mean.dice}, {"IoU", agg.mean.iou}, {"samples", agg.samples}};
}

}  // namespace

std::string report_to_json(const EvalRunReport& report) {
  nlohmann::ordered_json j;
  j["split"] = report.split;
  j["strategy"] = report.strategy;
  j["tprime"] = report.tprime;
  j["overall"] = metrics_json(report.overall);
  j["by_style"] = nlohmann::ordered_json::object();
  for (const auto& [style, agg] : report.by_style) j["by_style"][style] = metrics_json(agg);
  return j.dump(2) + "\n";
}

void write_report(const EvalRunReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write " + path);
  out << report_to_json(report);
}

}  // namespace refvos
