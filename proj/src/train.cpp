#include "refvos/train.hpp"

#include "refvos/evalrun.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <stdexcept>

namespace refvos {

namespace {

SampleTargets build_targets(const VideoClip& clip, const ReferringSample& sample,
                            const std::vector<int>& frames_abs) {
  SampleTargets t;
  for (const int id : sample.target_ids) {
    const ObjectTrack* obj = clip.find_object(id);
    if (!obj) throw std::invalid_argument("train: sample references unknown object id");
    t.class_ids.push_back(obj->class_id);
    std::vector<Eigen::ArrayXd> masks;
    std::vector<std::uint8_t> vis;
    for (const int f : frames_abs) {
      masks.push_back(downsample_mask_nearest(clip.masks[f], clip.height, clip.width, id, 4));
      vis.push_back(obj->visible_at(f) ? 1 : 0);
    }
    t.masks4.push_back(std::move(masks));
    t.visible.push_back(std::move(vis));
  }
  return t;
}

}  // namespace

namespace {

LossTerms build_sample_loss_impl(const Model& model, const SampleLossInputs& in,
                                 const SamplePlan* pinned, SamplePlan* capture_plan) {
  const RunConfig& cfg = model.cfg;
  const VideoClip& clip = *in.clip;
  const ReferringSample& sample = *in.sample;
  const TextEmbedding text = model.encode_text(sample.expression);

  // Phase one: score every frame in the window, no tape. A pinned plan
  // replaces these discrete outcomes entirely.
  std::vector<int> selected;
  Eigen::ArrayXd frame_embeddings;
  if (pinned) {
    selected = pinned->selected;
    frame_embeddings = pinned->frame_embeddings;
  } else {
    const ClipForward fwd = forward_clip(model, clip, text, in.start_frame, in.frame_count);
    selected = select_top_frames(fwd.scores, cfg.keyframe_count);
    frame_embeddings = fwd.frame_embeddings;
  }

  // Phase two: differentiable pass over the selected frames only.
  std::vector<ad::Tensor> frames;
  std::vector<int> frames_abs;
  for (const int rel : selected) {
    frames_abs.push_back(in.start_frame + rel);
    frames.push_back(ad::Tensor::constant({3, clip.width * clip.height},
                                          clip.frames[in.start_frame + rel]));
  }
  const FeaturePyramid pyr = extract_features(frames, clip.height, clip.width, model.backbone);
  const QuerySet q0 = init_queries(text, model.decoder, static_cast<int>(selected.size()));
  const QuerySet qL = decode(q0, pyr, text, model.decoder, cfg);

  QuerySet mixed;
  mixed.layer = qL.layer;
  mixed.per_frame = interframe_attend(qL.per_frame, model.interframe, cfg);

  FramePredictionTape post;
  post.class_logits = classify(mixed, text, model.decoder);
  {
    const auto embeds = embed_masks(mixed, model.decoder);
    post.mask_logits = predict_mask_logits(embeds, pyr.mask_features);
    post.masks = post.mask_logits;
    for (auto& t : post.masks) t = ad::sigmoid(t);
  }

  const SampleTargets targets = build_targets(clip, sample, frames_abs);

  // One assignment per video from costs summed over the selected frames.
  MatchResult match;
  if (pinned) {
    match = pinned->match;
  } else {
    std::vector<Eigen::ArrayXd> logits_vals, mask_vals;
    for (std::size_t i = 0; i < post.class_logits.size(); ++i) {
      logits_vals.push_back(post.class_logits[i].value());
      mask_vals.push_back(post.masks[i].value());
    }
    const Eigen::ArrayXd cost = match_cost(logits_vals, mask_vals, targets, cfg.loss_weights,
                                           cfg.num_queries, cfg.num_classes);
    if (!cost.isFinite().all())
      throw NonFiniteLossError("non-finite matching cost for clip " + clip.clip_id);
    match = hungarian_match(cost, cfg.num_queries, targets.objects());
  }

  FrameLossTerms frame_terms = frame_loss(post, targets, match, cfg.num_classes);
  auto add_aux_terms = [&frame_terms, &targets, &match, &cfg](const FramePredictionTape& tape) {
    const FrameLossTerms aux = frame_loss(tape, targets, match, cfg.num_classes);
    frame_terms.cls = ad::add(frame_terms.cls, aux.cls);
    frame_terms.bce = ad::add(frame_terms.bce, aux.bce);
    frame_terms.dice = ad::add(frame_terms.dice, aux.dice);
  };
  int applications = 1;
  auto tape_for = [&](const QuerySet& qs) {
    FramePredictionTape tape;
    tape.class_logits = classify(qs, text, model.decoder);
    const auto embeds = embed_masks(qs, model.decoder);
    tape.mask_logits = predict_mask_logits(embeds, pyr.mask_features);
    tape.masks = tape.mask_logits;
    for (auto& t : tape.masks) t = ad::sigmoid(t);
    return tape;
  };
  if (cfg.pre_attention_frame_loss) {
    // The per-frame heads also serve unselected frames at inference; keep
    // them supervised on the pre-attention queries.
    add_aux_terms(tape_for(qL));
    ++applications;
  }
  if (cfg.deep_supervision) {
    // Intermediate decoder layers re-decoded per depth would be costly; the
    // extension point applies the heads to the layer-0 queries instead.
    add_aux_terms(tape_for(q0));
    ++applications;
  }

  LossTerms terms;
  terms.cls = ad::scale(frame_terms.cls, 1.0 / applications);
  terms.mask_bce = ad::scale(frame_terms.bce, 1.0 / applications);
  terms.mask_dice = ad::scale(frame_terms.dice, 1.0 / applications);
  terms.temporal = temporal_similarity_loss(mixed.per_frame, match);
  terms.video_mask = video_mask_loss(post, targets, match);

  // Scorer supervision: frame t is relevant iff a target mask is non-empty.
  // The embeddings enter detached so this loss reaches only the scorer.
  const ad::Tensor e_all =
      ad::Tensor::constant({in.frame_count, cfg.query_dim}, frame_embeddings);
  const FrameScores fs = score_frames(e_all, model.scorer);
  Eigen::ArrayXd relevance(in.frame_count);
  for (int t = 0; t < in.frame_count; ++t) {
    bool rel = false;
    for (const int id : sample.target_ids) {
      const ObjectTrack* obj = clip.find_object(id);
      if (obj && obj->visible_at(in.start_frame + t)) rel = true;
    }
    relevance[t] = rel ? 1.0 : 0.0;
  }
  terms.keyframe_aux = ad::bce_logits_mean(fs.logits, relevance);

  if (capture_plan) {
    capture_plan->selected = selected;
    capture_plan->frame_embeddings = frame_embeddings;
    capture_plan->match = match;
  }
  return terms;
}

}  // namespace

LossTerms build_sample_loss(const Model& model, const SampleLossInputs& in,
                            SamplePlan* capture_plan) {
  return build_sample_loss_impl(model, in, nullptr, capture_plan);
}

LossTerms build_sample_loss_pinned(const Model& model, const SampleLossInputs& in,
                                   const SamplePlan& plan) {
  return build_sample_loss_impl(model, in, &plan, nullptr);
}

TrainResult train(const RunConfig& cfg, const Dataset& data, const TrainOptions& opts) {
  cfg.validate();
  TrainResult result{Model::create(cfg), OptimizerState{}, {}};
  Model& model = result.model;
  result.opt = make_optimizer_state(model);

  const std::vector<int> train_clips = split_indices(data, Split::train);

  // Clips with at least one sample in the requested style set.
  struct Candidate {
    int clip_index;
    std::vector<int> sample_indices;
  };
  std::vector<Candidate> pool;
  for (const int ci : train_clips) {
    Candidate c{ci, {}};
    for (std::size_t si = 0; si < data[ci].samples.size(); ++si)
      if (opts.train_styles.empty() || opts.train_styles.count(data[ci].samples[si].style))
        c.sample_indices.push_back(static_cast<int>(si));
    if (!c.sample_indices.empty()) pool.push_back(std::move(c));
  }
  if (pool.empty() && cfg.optimizer.steps > 0)
    throw std::invalid_argument("train: no training clips carry the requested styles");

  std::ofstream log_file;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    log_file.open(opts.out_dir + "/log.jsonl");
    save_config(cfg, opts.out_dir + "/config.json");
  }

  // Validation J&F per checkpoint plus at the end; the final checkpoint is
  // the one shipped, the best-val step is reported alongside.
  const bool track_val = !opts.out_dir.empty() && !split_indices(data, Split::val).empty();
  double best_val_jf = -1.0;
  int best_val_step = -1;
  std::ofstream val_log;
  if (track_val) val_log.open(opts.out_dir + "/val_history.jsonl");
  auto eval_val = [&](int step) {
    if (!track_val) return;
    const EvalRunReport rep = evaluate_run(model, data, Split::val);
    if (rep.overall.mean.jf > best_val_jf) {
      best_val_jf = rep.overall.mean.jf;
      best_val_step = step;
    }
    nlohmann::ordered_json j;
    j["step"] = step;
    j["val_jf"] = rep.overall.mean.jf;
    val_log << j.dump() << "\n";
  };

  Rng batch_rng = derive_rng(static_cast<std::uint64_t>(cfg.seed), "train.batches");
  const auto& oc = cfg.optimizer;

  for (int step = 0; step < oc.steps; ++step) {
    const double lr = cosine_lr(oc.lr, step, oc.steps);

    ad::Tensor batch_total;
    LossBreakdown mean{};
    std::vector<std::string> batch_desc;
    auto dump_and_abort = [&](const std::string& why) {
      if (!opts.out_dir.empty()) {
        std::ofstream dump(opts.out_dir + "/nan_dump.json");
        nlohmann::ordered_json j;
        j["step"] = step;
        j["lr"] = lr;
        j["why"] = why;
        j["batch"] = batch_desc;
        j["loss"] = {{"cls", mean.cls},          {"mask_bce", mean.mask_bce},
                     {"mask_dice", mean.mask_dice}, {"temporal", mean.temporal},
                     {"video_mask", mean.video_mask}, {"keyframe_aux", mean.keyframe_aux}};
        dump << j.dump(2) << "\n";
      }
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) + " (" +
                               why + ")");
    };
    for (int b = 0; b < oc.batch_size; ++b) {
      const Candidate& cand = pool[batch_rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1)];
      const ClipEntry& entry = data[cand.clip_index];
      const int si = cand.sample_indices[batch_rng.uniform_int(
          0, static_cast<std::int64_t>(cand.sample_indices.size()) - 1)];
      const ReferringSample& sample = entry.samples[si];
      const int total = entry.clip.length();
      const int crop = std::min(oc.train_clip_len, total);
      const int start = static_cast<int>(batch_rng.uniform_int(0, total - crop));
      batch_desc.push_back(entry.clip.clip_id + " :: " + sample.expression);

      SampleLossInputs in{&entry.clip, &sample, start, crop};
      LossTerms terms;
      try {
        terms = build_sample_loss(model, in);
      } catch (const NonFiniteLossError& e) {
        dump_and_abort(e.what());
      }
      const LossBreakdown bd = breakdown_values(terms, cfg.loss_weights);
      mean.cls += bd.cls;
      mean.mask_bce += bd.mask_bce;
      mean.mask_dice += bd.mask_dice;
      mean.temporal += bd.temporal;
      mean.video_mask += bd.video_mask;
      mean.keyframe_aux += bd.keyframe_aux;
      mean.total += bd.total;
      const ad::Tensor total_t = total_loss(terms, cfg.loss_weights);
      batch_total = b == 0 ? total_t : ad::add(batch_total, total_t);
    }
    const double inv = 1.0 / oc.batch_size;
    mean.cls *= inv;
    mean.mask_bce *= inv;
    mean.mask_dice *= inv;
    mean.temporal *= inv;
    mean.video_mask *= inv;
    mean.keyframe_aux *= inv;
    mean.total *= inv;

    if (!std::isfinite(mean.total)) dump_and_abort("total loss is not finite");

    ad::scale(batch_total, inv).backward();
    adamw_step(model, result.opt, lr);

    StepLog entry{step, lr, mean};
    result.log.push_back(entry);
    if (log_file) log_file << step_log_json(entry) << "\n";
    if (opts.echo && (step % oc.log_every == 0 || step + 1 == oc.steps))
      std::cout << step_log_json(entry) << std::endl;
    if (!opts.out_dir.empty() && oc.checkpoint_every > 0 && (step + 1) % oc.checkpoint_every == 0) {
      save_checkpoint(model, result.opt, opts.out_dir + "/ckpt_" + std::to_string(step + 1) + ".bin");
      eval_val(step + 1);
    }
  }

  if (!opts.out_dir.empty()) {
    save_checkpoint(model, result.opt, opts.out_dir + "/ckpt_final.bin");
    if (oc.steps > 0 && (oc.checkpoint_every <= 0 || oc.steps % oc.checkpoint_every != 0))
      eval_val(oc.steps);
    if (track_val) {
      nlohmann::ordered_json j;
      j["final_step"] = oc.steps;
      j["best_val_jf"] = best_val_jf;
      j["best_val_step"] = best_val_step;
      std::ofstream(opts.out_dir + "/summary.json") << j.dump(2) << "\n";
    }
  }
  return result;
}

std::string step_log_json(const StepLog& entry) {
  nlohmann::ordered_json j;
  j["step"] = entry.step;
  j["lr"] = entry.lr;
  j["cls"] = entry.loss.cls;
  j["mask_bce"] = entry.loss.mask_bce;
  j["mask_dice"] = entry.loss.mask_dice;
  j["temporal"] = entry.loss.temporal;
  j["video_mask"] = entry.loss.video_mask;
  j["keyframe_aux"] = entry.loss.keyframe_aux;
  j["total"] = entry.loss.total;
  return j.dump();
}

}  // namespace refvos
