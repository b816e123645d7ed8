#include "refvos/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <sstream>

namespace refvos {

KeyframeAblation ablate_keyframes(const Model& model, const Dataset& data,
                                  const AblationSpec& spec) {
  if (spec.strategies.empty() || spec.tprime_values.empty())
    throw std::invalid_argument("ablate_keyframes: empty strategy or T' list");
  KeyframeAblation result;
  result.spec = spec;
  for (const auto strategy : spec.strategies) {
    std::vector<double> row;
    for (const int tprime : spec.tprime_values) {
      const EvalRunReport r = evaluate_run(model, data, spec.split, strategy, tprime);
      row.push_back(r.overall.mean.jf);
    }
    result.jf.push_back(std::move(row));
  }
  return result;
}

std::string keyframe_ablation_json(const KeyframeAblation& result) {
  nlohmann::ordered_json j;
  j["tprime"] = result.spec.tprime_values;
  j["rows"] = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < result.spec.strategies.size(); ++s) {
    nlohmann::ordered_json row;
    row["strategy"] = to_string(result.spec.strategies[s]);
    row["jf"] = result.jf[s];
    j["rows"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

std::string keyframe_ablation_svg(const KeyframeAblation& result) {
  const int width = 560, height = 360, ml = 60, mr = 20, mt = 30, mb = 50;
  const int pw = width - ml - mr, ph = height - mt - mb;
  double lo = 1.0, hi = 0.0;
  for (const auto& row : result.jf)
    for (const double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  lo = std::max(0.0, lo - 0.05);
  hi = std::min(1.0, hi + 0.05);
  if (hi - lo < 1e-9) hi = lo + 0.1;

  const auto& ts = result.spec.tprime_values;
  auto sx = [&](std::size_t i) {
    return ml + (ts.size() == 1 ? pw / 2.0
                                : static_cast<double>(i) / (ts.size() - 1) * pw);
  };
  auto sy = [&](double v) { return mt + (1.0 - (v - lo) / (hi - lo)) * ph; };

  static const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << width / 2 << "' y='18' text-anchor='middle' font-size='14'>"
      << "Key-frame selection: J&amp;F vs T'</text>\n";
  // axes
  svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + ph
      << "' stroke='black'/>\n";
  svg << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw << "' y2='" << mt + ph
      << "' stroke='black'/>\n";
  for (int g = 0; g <= 4; ++g) {
    const double v = lo + (hi - lo) * g / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    svg << "<text x='" << ml - 8 << "' y='" << sy(v) + 4
        << "' text-anchor='end' font-size='11'>" << buf << "</text>\n";
    svg << "<line x1='" << ml << "' y1='" << sy(v) << "' x2='" << ml + pw << "' y2='" << sy(v)
        << "' stroke='#dddddd'/>\n";
  }
  for (std::size_t i = 0; i < ts.size(); ++i)
    svg << "<text x='" << sx(i) << "' y='" << mt + ph + 18
        << "' text-anchor='middle' font-size='11'>" << ts[i] << "</text>\n";
  svg << "<text x='" << ml + pw / 2 << "' y='" << height - 12
      << "' text-anchor='middle' font-size='12'>T'</text>\n";

  for (std::size_t s = 0; s < result.jf.size(); ++s) {
    const char* color = kPalette[s % 5];
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (std::size_t i = 0; i < result.jf[s].size(); ++i)
      svg << sx(i) << "," << sy(result.jf[s][i]) << " ";
    svg << "'/>\n";
    for (std::size_t i = 0; i < result.jf[s].size(); ++i)
      svg << "<circle cx='" << sx(i) << "' cy='" << sy(result.jf[s][i]) << "' r='3' fill='"
          << color << "'/>\n";
    svg << "<text x='" << ml + pw - 110 << "' y='" << mt + 16 + 16 * s << "' font-size='12' fill='"
        << color << "'>" << to_string(result.spec.strategies[s]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

ExpressionAblation ablate_expressions(const RunConfig& cfg, const Dataset& data,
                                      const std::vector<std::set<ExpressionStyle>>& train_sets,
                                      const std::vector<ExpressionStyle>& test_styles,
                                      const std::string& out_dir) {
  if (train_sets.empty() || test_styles.empty())
    throw std::invalid_argument("ablate_expressions: empty style sets");
  ExpressionAblation result;
  result.train_sets = train_sets;
  result.test_styles = test_styles;

  for (std::size_t i = 0; i < train_sets.size(); ++i) {
    TrainOptions opts;
    opts.train_styles = train_sets[i];
    opts.echo = false;
    if (!out_dir.empty()) {
      std::string tag;
      for (const auto s : train_sets[i]) tag += std::string(tag.empty() ? "" : "-") + to_string(s);
      opts.out_dir = out_dir + "/train_" + tag;
    }
    TrainResult trained = train(cfg, data, opts);
    std::vector<ExpressionAblationCell> row;
    for (const auto style : test_styles) {
      const EvalRunReport r =
          evaluate_run(trained.model, data, Split::val, SelectionStrategy::ours, -1, {style});
      row.push_back({r.overall.mean, r.overall.samples});
    }
    result.grid.push_back(std::move(row));
  }
  return result;
}

std::string expression_ablation_json(const ExpressionAblation& result) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.train_sets.size(); ++i) {
    nlohmann::ordered_json row;
    std::vector<std::string> styles;
    for (const auto s : result.train_sets[i]) styles.push_back(to_string(s));
    row["train_styles"] = styles;
    row["cells"] = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < result.test_styles.size(); ++k) {
      const auto& cell = result.grid[i][k];
      row["cells"][to_string(result.test_styles[k])] = {{"J", cell.metrics.j},
                                                        {"F", cell.metrics.f},
                                                        {"JF", cell.metrics.jf},
                                                        {"Dice", cell.metrics.dice},
                                                        {"IoU", cell.metrics.iou},
                                                        {"samples", cell.samples}};
    }
    j["rows"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

}  // namespace refvos
