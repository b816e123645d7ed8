#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "refvos/ablation.hpp"
#include "refvos/evalrun.hpp"
#include "refvos/manifest.hpp"
#include "refvos/train.hpp"

namespace {

refvos::Dataset load_data(const std::string& data_arg) {
  namespace fs = std::filesystem;
  const fs::path p(data_arg);
  if (fs::is_directory(p)) return refvos::load_manifest((p / "manifest.json").string());
  return refvos::load_manifest(data_arg);
}

refvos::Split parse_split(const std::string& s) {
  if (s == "train") return refvos::Split::train;
  if (s == "val") return refvos::Split::val;
  if (s == "test") return refvos::Split::test;
  if (s == "all") return refvos::Split::all;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::vector<std::string> split_list(const std::string& csv, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::set<refvos::ExpressionStyle> parse_styles(const std::string& csv) {
  std::set<refvos::ExpressionStyle> out;
  for (const auto& name : split_list(csv, ',')) out.insert(refvos::style_from_string(name));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-guided referring video segmentation harness"};
  app.require_subcommand(1);

  // train
  auto* cmd_train = app.add_subcommand("train", "Train a model from a config and a dataset");
  std::string train_config, train_data, train_out, train_styles;
  cmd_train->add_option("--config", train_config, "RunConfig JSON")->required();
  cmd_train->add_option("--data", train_data, "dataset dir or manifest path")->required();
  cmd_train->add_option("--out", train_out, "output directory")->required();
  cmd_train->add_option("--train-styles", train_styles,
                        "restrict training expressions (comma list)");

  // eval
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "val", eval_report, eval_strategy = "ours";
  int eval_tprime = -1;
  cmd_eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  cmd_eval->add_option("--data", eval_data, "dataset dir or manifest path")->required();
  cmd_eval->add_option("--split", eval_split, "train|val|test|all");
  cmd_eval->add_option("--report", eval_report, "output JSON path")->required();
  cmd_eval->add_option("--strategy", eval_strategy, "ours|uniform|cosine");
  cmd_eval->add_option("--tprime", eval_tprime, "override T'");

  // ablate-kfs
  auto* cmd_kfs = app.add_subcommand("ablate-kfs", "Key-frame strategy/T' ablation");
  std::string kfs_ckpt, kfs_data, kfs_out, kfs_strategies = "ours,uniform,cosine",
                                           kfs_tprimes = "4,8,16";
  cmd_kfs->add_option("--checkpoint", kfs_ckpt, "checkpoint file")->required();
  cmd_kfs->add_option("--data", kfs_data, "dataset dir or manifest path")->required();
  cmd_kfs->add_option("--strategies", kfs_strategies, "comma list of strategies");
  cmd_kfs->add_option("--tprime", kfs_tprimes, "comma list of T' values");
  cmd_kfs->add_option("--out", kfs_out, "output directory")->required();

  // ablate-expr
  auto* cmd_expr = app.add_subcommand("ablate-expr", "Expression style ablation");
  std::string expr_config, expr_data, expr_out;
  std::string expr_train_sets = "appearance,spatial,motion;appearance,spatial";
  std::string expr_test_styles = "appearance,spatial,motion";
  cmd_expr->add_option("--config", expr_config, "RunConfig JSON")->required();
  cmd_expr->add_option("--data", expr_data, "dataset dir or manifest path")->required();
  cmd_expr->add_option("--train-styles", expr_train_sets,
                       "';'-separated train sets, each a comma list");
  cmd_expr->add_option("--test-styles", expr_test_styles, "comma list of test styles");
  cmd_expr->add_option("--out", expr_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_train->parsed()) {
      const refvos::RunConfig cfg = refvos::load_config(train_config);
      const refvos::Dataset data = load_data(train_data);
      refvos::TrainOptions opts;
      opts.out_dir = train_out;
      if (!train_styles.empty()) opts.train_styles = parse_styles(train_styles);
      refvos::train(cfg, data, opts);
      std::cout << "final checkpoint: " << train_out << "/ckpt_final.bin" << std::endl;
    } else if (cmd_eval->parsed()) {
      const refvos::Checkpoint ck = refvos::load_checkpoint(eval_ckpt);
      const refvos::Dataset data = load_data(eval_data);
      const refvos::EvalRunReport report =
          refvos::evaluate_run(ck.model, data, parse_split(eval_split),
                               refvos::strategy_from_string(eval_strategy), eval_tprime);
      refvos::write_report(report, eval_report);
      std::cout << refvos::report_to_json(report);
    } else if (cmd_kfs->parsed()) {
      const refvos::Checkpoint ck = refvos::load_checkpoint(kfs_ckpt);
      const refvos::Dataset data = load_data(kfs_data);
      refvos::AblationSpec spec;
      spec.strategies.clear();
      for (const auto& s : split_list(kfs_strategies, ','))
        spec.strategies.push_back(refvos::strategy_from_string(s));
      spec.tprime_values.clear();
      for (const auto& s : split_list(kfs_tprimes, ',')) spec.tprime_values.push_back(std::stoi(s));
      const refvos::KeyframeAblation result = refvos::ablate_keyframes(ck.model, data, spec);
      std::filesystem::create_directories(kfs_out);
      std::ofstream(kfs_out + "/keyframe_ablation.json") << refvos::keyframe_ablation_json(result);
      std::ofstream(kfs_out + "/keyframe_ablation.svg") << refvos::keyframe_ablation_svg(result);
      std::cout << refvos::keyframe_ablation_json(result);
    } else if (cmd_expr->parsed()) {
      const refvos::RunConfig cfg = refvos::load_config(expr_config);
      const refvos::Dataset data = load_data(expr_data);
      std::vector<std::set<refvos::ExpressionStyle>> train_sets;
      for (const auto& set_csv : split_list(expr_train_sets, ';'))
        train_sets.push_back(parse_styles(set_csv));
      std::vector<refvos::ExpressionStyle> test_styles;
      for (const auto& s : split_list(expr_test_styles, ','))
        test_styles.push_back(refvos::style_from_string(s));
      const refvos::ExpressionAblation result =
          refvos::ablate_expressions(cfg, data, train_sets, test_styles, expr_out);
      std::filesystem::create_directories(expr_out);
      std::ofstream(expr_out + "/expression_ablation.json")
          << refvos::expression_ablation_json(result);
      std::cout << refvos::expression_ablation_json(result);
    }
  } catch (const std::exception& e) {
    std::cerr << "refvos: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
