#include "refvos/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

#include "refvos/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace refvos {

const char* to_string(ExpressionStyle s) {
  switch (s) {
    case ExpressionStyle::appearance: return "appearance";
    case ExpressionStyle::spatial: return "spatial";
    case ExpressionStyle::motion: return "motion";
  }
  return "appearance";
}

ExpressionStyle style_from_string(const std::string& s) {
  if (s == "appearance") return ExpressionStyle::appearance;
  if (s == "spatial") return ExpressionStyle::spatial;
  if (s == "motion") return ExpressionStyle::motion;
  throw std::invalid_argument("manifest: samples[].style has unknown value '" + s + "'");
}

std::vector<int> split_indices(const Dataset& data, Split split) {
  const int n = static_cast<int>(data.size());
  const int train_end = static_cast<int>(std::ceil(0.7 * n));
  const int val_end = static_cast<int>(std::ceil(0.85 * n));
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    const bool in_split = split == Split::all || (split == Split::train && i < train_end) ||
                          (split == Split::val && i >= train_end && i < val_end) ||
                          (split == Split::test && i >= val_end);
    if (in_split) out.push_back(i);
  }
  return out;
}

bool clips_equal(const VideoClip& a, const VideoClip& b) {
  if (a.clip_id != b.clip_id || a.width != b.width || a.height != b.height ||
      a.length() != b.length() || !(a.objects == b.objects) || a.masks != b.masks)
    return false;
  for (int t = 0; t < a.length(); ++t)
    if ((a.frames[t] != b.frames[t]).any()) return false;
  return true;
}

namespace {

[[noreturn]] void invalid(const std::string& msg) {
  throw std::invalid_argument("manifest: " + msg);
}

std::string frame_name(int t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d.png", t);
  return buf;
}

void validate_clip(const VideoClip& clip) {
  if (clip.length() < 1) invalid("clip '" + clip.clip_id + "' has no frames");
  std::set<int> ids;
  for (const auto& obj : clip.objects) {
    if (obj.object_id <= 0)
      invalid("objects[].object_id must be positive in clip '" + clip.clip_id + "'");
    if (!ids.insert(obj.object_id).second)
      invalid("objects[].object_id " + std::to_string(obj.object_id) + " repeated in clip '" +
              clip.clip_id + "'");
  }
  for (int t = 0; t < clip.length(); ++t) {
    for (const std::uint8_t v : clip.masks[t])
      if (v != 0 && !ids.count(v))
        invalid("mask id " + std::to_string(int(v)) + " at frame " + std::to_string(t) +
                " missing from objects of clip '" + clip.clip_id + "'");
  }
  // bbox present exactly on frames with a non-empty mask
  for (const auto& obj : clip.objects) {
    for (int t = 0; t < clip.length(); ++t) {
      const bool empty = clip.mask_empty_at(t, obj.object_id);
      const bool has_box = obj.bboxes.count(t) != 0;
      if (empty && has_box)
        invalid("objects[].bboxes has frame " + std::to_string(t) + " where object " +
                std::to_string(obj.object_id) + " mask is empty in clip '" + clip.clip_id + "'");
      if (!empty && !has_box)
        invalid("objects[].bboxes missing frame " + std::to_string(t) + " for object " +
                std::to_string(obj.object_id) + " in clip '" + clip.clip_id + "'");
    }
  }
}

}  // namespace

Dataset load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ordered_json j;
  try {
    j = ordered_json::parse(ss.str());
  } catch (const std::exception& e) {
    invalid(std::string("parse failure: ") + e.what());
  }
  if (!j.contains("clips") || !j["clips"].is_array()) invalid("'clips' array missing");
  if (!j.contains("samples") || !j["samples"].is_array()) invalid("'samples' array missing");

  const fs::path root = fs::path(path).parent_path();

  Dataset data;
  for (const auto& jc : j["clips"]) {
    for (const char* key : {"clip_id", "frame_dir", "mask_dir", "objects"})
      if (!jc.contains(key)) invalid(std::string("clips[].") + key + " missing");

    ClipEntry entry;
    VideoClip& clip = entry.clip;
    clip.clip_id = jc["clip_id"].get<std::string>();

    for (const auto& jo : jc["objects"]) {
      for (const char* key : {"object_id", "class_id", "attributes", "bboxes"})
        if (!jo.contains(key)) invalid(std::string("clips[].objects[].") + key + " missing");
      ObjectTrack obj;
      obj.object_id = jo["object_id"].get<int>();
      obj.class_id = jo["class_id"].get<int>();
      for (auto it = jo["attributes"].begin(); it != jo["attributes"].end(); ++it)
        obj.attributes[it.key()] = it.value().get<std::string>();
      for (auto it = jo["bboxes"].begin(); it != jo["bboxes"].end(); ++it) {
        const auto& arr = it.value();
        if (!arr.is_array() || arr.size() != 4)
          invalid("clips[].objects[].bboxes values must be [x0,y0,x1,y1]");
        obj.bboxes[std::stoi(it.key())] =
            Box{arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>(), arr[3].get<double>()};
      }
      clip.objects.push_back(std::move(obj));
    }
    std::sort(clip.objects.begin(), clip.objects.end(),
              [](const ObjectTrack& a, const ObjectTrack& b) { return a.object_id < b.object_id; });

    const fs::path frame_dir = root / jc["frame_dir"].get<std::string>();
    const fs::path mask_dir = root / jc["mask_dir"].get<std::string>();
    for (int t = 0;; ++t) {
      const fs::path fpath = frame_dir / frame_name(t);
      if (!fs::exists(fpath)) {
        if (t == 0) invalid("clip '" + clip.clip_id + "' has no frame 00000.png");
        break;
      }
      const ImageU8 img = read_png(fpath.string());
      if (img.channels != 3)
        throw std::runtime_error("manifest: frame is not RGB: " + fpath.string());
      if (t == 0) {
        clip.width = img.width;
        clip.height = img.height;
      } else if (img.width != clip.width || img.height != clip.height) {
        invalid("frame size changes within clip '" + clip.clip_id + "'");
      }
      const int hw = clip.width * clip.height;
      Eigen::ArrayXd frame(3 * hw);
      for (int p = 0; p < hw; ++p)
        for (int c = 0; c < 3; ++c)
          frame[c * hw + p] = img.pixels[static_cast<std::size_t>(p) * 3 + c] / 255.0;
      clip.frames.push_back(std::move(frame));

      const fs::path mpath = mask_dir / frame_name(t);
      if (!fs::exists(mpath))
        throw std::runtime_error("manifest: mask file missing for clip '" + clip.clip_id +
                                 "': " + mpath.string());
      const ImageU8 mimg = read_png(mpath.string());
      if (mimg.channels != 1 || mimg.width != clip.width || mimg.height != clip.height)
        throw std::runtime_error("manifest: mask shape mismatch in clip '" + clip.clip_id +
                                 "': " + mpath.string());
      clip.masks.push_back(mimg.pixels);
    }

    validate_clip(clip);
    data.push_back(std::move(entry));
  }

  std::sort(data.begin(), data.end(), [](const ClipEntry& a, const ClipEntry& b) {
    return a.clip.clip_id < b.clip.clip_id;
  });
  for (std::size_t i = 1; i < data.size(); ++i)
    if (data[i].clip.clip_id == data[i - 1].clip.clip_id)
      invalid("clips[].clip_id '" + data[i].clip.clip_id + "' repeated");

  for (const auto& js : j["samples"]) {
    for (const char* key : {"clip_id", "expression", "target_ids", "style"})
      if (!js.contains(key)) invalid(std::string("samples[].") + key + " missing");
    ReferringSample s;
    s.clip_id = js["clip_id"].get<std::string>();
    s.expression = js["expression"].get<std::string>();
    for (const auto& id : js["target_ids"]) s.target_ids.insert(id.get<int>());
    s.style = style_from_string(js["style"].get<std::string>());
    if (s.target_ids.empty()) invalid("samples[].target_ids empty for clip '" + s.clip_id + "'");

    auto it = std::find_if(data.begin(), data.end(), [&s](const ClipEntry& e) {
      return e.clip.clip_id == s.clip_id;
    });
    if (it == data.end()) invalid("samples[].clip_id '" + s.clip_id + "' has no clip");
    for (const int id : s.target_ids)
      if (!it->clip.find_object(id))
        invalid("samples[].target_ids references unknown object_id " + std::to_string(id) +
                " in clip '" + s.clip_id + "'");
    it->samples.push_back(std::move(s));
  }

  return data;
}

void save_manifest(const Dataset& data, const std::string& path) {
  std::vector<const ClipEntry*> order;
  for (const auto& e : data) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const ClipEntry* a, const ClipEntry* b) {
    return a->clip.clip_id < b->clip.clip_id;
  });

  const fs::path root = fs::path(path).parent_path();
  if (!root.empty()) fs::create_directories(root);

  ordered_json j;
  j["clips"] = ordered_json::array();
  j["samples"] = ordered_json::array();

  for (const ClipEntry* e : order) {
    const VideoClip& clip = e->clip;
    validate_clip(clip);
    const std::string frame_dir = "frames/" + clip.clip_id;
    const std::string mask_dir = "masks/" + clip.clip_id;
    fs::create_directories(root / frame_dir);
    fs::create_directories(root / mask_dir);

    const int hw = clip.width * clip.height;
    for (int t = 0; t < clip.length(); ++t) {
      std::vector<std::uint8_t> rgb(static_cast<std::size_t>(hw) * 3);
      for (int p = 0; p < hw; ++p)
        for (int c = 0; c < 3; ++c) {
          const double v = clip.frames[t][c * hw + p];
          if (v < 0.0 || v > 1.0)
            invalid("frame values outside [0,1] in clip '" + clip.clip_id + "'");
          rgb[static_cast<std::size_t>(p) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      write_png_rgb((root / frame_dir / frame_name(t)).string(), clip.width, clip.height, rgb);
      write_png_gray((root / mask_dir / frame_name(t)).string(), clip.width, clip.height,
                     clip.masks[t]);
    }

    ordered_json jc;
    jc["clip_id"] = clip.clip_id;
    jc["frame_dir"] = frame_dir;
    jc["mask_dir"] = mask_dir;
    jc["objects"] = ordered_json::array();
    for (const auto& obj : clip.objects) {
      ordered_json jo;
      jo["object_id"] = obj.object_id;
      jo["class_id"] = obj.class_id;
      jo["attributes"] = ordered_json::object();
      for (const auto& [k, v] : obj.attributes) jo["attributes"][k] = v;
      ordered_json boxes = ordered_json::object();
      for (const auto& [t, b] : obj.bboxes)
        boxes[std::to_string(t)] = {b.x0, b.y0, b.x1, b.y1};
      jo["bboxes"] = std::move(boxes);
      jc["objects"].push_back(std::move(jo));
    }
    j["clips"].push_back(std::move(jc));

    for (const auto& s : e->samples) {
      ordered_json js;
      js["clip_id"] = s.clip_id;
      js["expression"] = s.expression;
      js["target_ids"] = s.target_ids;
      js["style"] = to_string(s.style);
      j["samples"].push_back(std::move(js));
    }
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("manifest: write failed for " + path);
}

}  // namespace refvos
