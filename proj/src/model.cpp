#include "refvos/model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace refvos {

Model Model::create(const RunConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  const auto seed = static_cast<std::uint64_t>(cfg.seed);
  m.backbone = BackboneParams::create(m.params, cfg, seed);
  m.decoder = DecoderParams::create(m.params, cfg, seed);
  m.scorer = ScorerParams::create(m.params, cfg, seed);
  m.interframe = InterframeParams::create(m.params, cfg, seed);
  return m;
}

TextEmbedding Model::encode_text(const std::string& expression) const {
  return encode_expression(expression, cfg.text_dim,
                           mix_seed(static_cast<std::uint64_t>(cfg.seed), hash_str("text_encoder")));
}

ClipForward forward_clip(const Model& model, const VideoClip& clip, const TextEmbedding& text,
                         int start_frame, int frame_count) {
  ad::NoGradGuard no_grad;
  const int total = clip.length();
  if (frame_count < 0) frame_count = total - start_frame;
  if (start_frame < 0 || frame_count < 1 || start_frame + frame_count > total)
    throw std::invalid_argument("forward_clip: frame window out of range");

  std::vector<ad::Tensor> frames;
  frames.reserve(frame_count);
  for (int t = 0; t < frame_count; ++t)
    frames.push_back(ad::Tensor::constant({3, clip.width * clip.height},
                                          clip.frames[start_frame + t]));

  const FeaturePyramid pyr = extract_features(frames, clip.height, clip.width, model.backbone);
  const QuerySet q0 = init_queries(text, model.decoder, frame_count);
  const QuerySet qL = decode(q0, pyr, text, model.decoder, model.cfg);
  const auto logits = classify(qL, text, model.decoder);
  const auto embeds = embed_masks(qL, model.decoder);
  const auto masks = predict_masks(embeds, pyr.mask_features);
  const ad::Tensor emb = aggregate_frames(qL);
  const FrameScores fs = score_frames(emb, model.scorer);

  ClipForward out;
  out.frames = frame_count;
  out.h4 = pyr.h4();
  out.w4 = pyr.w4();
  out.frame_embeddings = emb.value();
  for (int t = 0; t < frame_count; ++t) {
    out.queries.push_back(qL.per_frame[t].value());
    out.class_logits.push_back(logits[t].value());
    out.mask_probs.push_back(masks[t].value());
    out.mask_features.push_back(pyr.mask_features[t].value());
    out.scores.push_back(fs.scores.value()[t]);
  }
  return out;
}

EnhancedForward enhance_selected(const Model& model, const ClipForward& fwd,
                                 const std::vector<int>& selected, const TextEmbedding& text) {
  ad::NoGradGuard no_grad;
  if (selected.empty()) throw std::invalid_argument("enhance_selected: empty frame selection");
  const int n = model.cfg.num_queries, cq = model.cfg.query_dim;

  std::vector<ad::Tensor> qsel;
  qsel.reserve(selected.size());
  for (const int t : selected)
    qsel.push_back(ad::Tensor::constant({n, cq}, fwd.queries.at(t)));
  const auto mixed = interframe_attend(qsel, model.interframe, model.cfg);

  QuerySet qs;
  qs.layer = model.cfg.decoder_layers;
  qs.per_frame = mixed;
  const auto logits = classify(qs, text, model.decoder);
  const auto embeds = embed_masks(qs, model.decoder);
  std::vector<ad::Tensor> feats;
  feats.reserve(selected.size());
  for (const int t : selected)
    feats.push_back(ad::Tensor::constant({model.cfg.mask_dim, fwd.h4 * fwd.w4},
                                         fwd.mask_features.at(t)));
  const auto masks = predict_masks(embeds, feats);

  EnhancedForward out;
  out.selected = selected;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    out.class_logits.push_back(logits[i].value());
    out.mask_probs.push_back(masks[i].value());
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'R', 'V', 'C', 'K', '0', '0', '0', '1'};

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const std::string& path) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
}

void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, 8); }

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
  std::uint64_t v = 0;
  read_bytes(in, &v, 8, path);
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  write_bytes(out, s.data(), s.size());
}

std::string read_string(std::ifstream& in, const std::string& path) {
  const std::uint64_t n = read_u64(in, path);
  std::string s(n, '\0');
  read_bytes(in, s.data(), n, path);
  return s;
}

void write_array(std::ofstream& out, const Eigen::ArrayXd& a) {
  write_u64(out, static_cast<std::uint64_t>(a.size()));
  write_bytes(out, a.data(), static_cast<std::size_t>(a.size()) * sizeof(double));
}

Eigen::ArrayXd read_array(std::ifstream& in, const std::string& path) {
  const std::uint64_t n = read_u64(in, path);
  Eigen::ArrayXd a(static_cast<Eigen::Index>(n));
  read_bytes(in, a.data(), n * sizeof(double), path);
  return a;
}

void compare_configs(const RunConfig& a, const RunConfig& b) {
  const std::string ja = config_to_json_text(a), jb = config_to_json_text(b);
  if (ja == jb) return;
  // Name the first differing line to make mismatches actionable.
  std::size_t i = 0, line_start = 0;
  while (i < ja.size() && i < jb.size() && ja[i] == jb[i]) {
    if (ja[i] == '\n') line_start = i + 1;
    ++i;
  }
  const std::size_t line_end_a = ja.find('\n', line_start);
  const std::size_t line_end_b = jb.find('\n', line_start);
  throw std::invalid_argument(
      "checkpoint: config mismatch; checkpoint has '" +
      ja.substr(line_start, line_end_a - line_start) + "' but caller expects '" +
      jb.substr(line_start, line_end_b - line_start) + "'");
}

}  // namespace

void save_checkpoint(const Model& model, const OptimizerState& opt, const std::string& path) {
  const auto& items = model.params.items();
  if (opt.m.size() != items.size() || opt.v.size() != items.size())
    throw std::invalid_argument("checkpoint: optimizer state does not match parameter count");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  write_bytes(out, kMagic, sizeof(kMagic));
  write_string(out, config_to_json_text(model.cfg));
  write_u64(out, static_cast<std::uint64_t>(opt.step));
  write_u64(out, items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    write_string(out, items[i].first);
    const auto& shape = items[i].second.shape();
    write_u64(out, shape.size());
    for (const int d : shape) write_u64(out, static_cast<std::uint64_t>(d));
    write_array(out, items[i].second.value());
    write_array(out, opt.m[i]);
    write_array(out, opt.v[i]);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, const RunConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  read_bytes(in, magic, 8, path);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);

  const RunConfig cfg = config_from_json_text(read_string(in, path));
  if (expected) compare_configs(cfg, *expected);

  Checkpoint ck{Model::create(cfg), OptimizerState{}};
  ck.opt.step = static_cast<std::int64_t>(read_u64(in, path));
  const std::uint64_t count = read_u64(in, path);
  const auto& items = ck.model.params.items();
  if (count != items.size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, path);
    if (name != items[i].first)
      throw std::runtime_error("checkpoint: parameter order mismatch at '" + name + "' in " + path);
    const std::uint64_t ndims = read_u64(in, path);
    std::vector<int> shape(ndims);
    for (auto& d : shape) d = static_cast<int>(read_u64(in, path));
    if (shape != items[i].second.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "' in " + path);
    ad::Tensor t = items[i].second;
    t.value_mut() = read_array(in, path);
    ck.opt.m.push_back(read_array(in, path));
    ck.opt.v.push_back(read_array(in, path));
  }
  return ck;
}

}  // namespace refvos
