#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "caps/pipeline.hpp"

namespace {

using namespace caps;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration JSON")->required();
  cmd->add_option("--seed", args.seed, "override the global seed");
  cmd->add_option("--out", args.out_dir, "override the output directory");
}

cli::RunConfig resolve_config(const CommonArgs& args) {
  cli::RunConfig config = cli::load_run_config(args.config_path);
  if (args.seed) config.seed = *args.seed;
  if (args.out_dir) config.output_dir = *args.out_dir;
  return config;
}

std::string joined(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(ids[i]);
  }
  return s;
}

FeatureSubset parse_subset(const std::string& text) {
  std::vector<int> ids;
  std::string token;
  std::stringstream ss(text);
  while (std::getline(ss, token, ',')) {
    try {
      ids.push_back(std::stoi(token));
    } catch (const std::exception&) {
      throw ConfigError("eval: cannot parse feature id '" + token + "'");
    }
  }
  if (ids.empty()) throw ConfigError("eval: empty subset");
  return FeatureSubset(std::move(ids));
}

std::string out_file(const cli::RunConfig& config, const char* name) {
  return (std::filesystem::path(config.output_dir) / name).string();
}

int dispatch(const std::string& command, const CommonArgs& args, const std::string& subset_text,
             int copies) {
  cli::RunConfig config = resolve_config(args);

  if (command == "run") {
    nlohmann::json report = cli::run_pipeline(config);
    std::printf("best subset: {%s}\n", joined(report["best_subset"]["indices"]).c_str());
    std::printf("best v:      %.6f\n", report["best_v"].get<double>());
    std::printf("size ratio:  %.4f\n", report["subset_size_ratio"].get<double>());
    std::printf("report:      %s\n", out_file(config, cli::kReportFile).c_str());
    return 0;
  }
  if (command == "collect") {
    data::Dataset ds = cli::load_stage(config);
    forest::SubsetEvaluator evaluator(ds, cli::make_evaluator_config(config, ds));
    auto records = cli::collect_stage(config, evaluator);
    std::printf("collected %zu records -> %s\n", records.size(),
                out_file(config, cli::kRecordsFile).c_str());
    return 0;
  }
  if (command == "train") {
    data::Dataset ds = cli::load_stage(config);
    auto records = collect::load_records(out_file(config, cli::kRecordsFile));
    cli::train_stage(config, ds, records);
    std::printf("checkpoint -> %s\n", out_file(config, cli::kCheckpointFile).c_str());
    return 0;
  }
  if (command == "search") {
    data::Dataset ds = cli::load_stage(config);
    forest::SubsetEvaluator evaluator(ds, cli::make_evaluator_config(config, ds));
    auto records = collect::load_records(out_file(config, cli::kRecordsFile));
    codec::CodecParams params = codec::load_checkpoint(out_file(config, cli::kCheckpointFile));
    auto result = cli::search_stage(config, records, params, evaluator);
    std::printf("best subset: {%s}  v=%.6f\n", joined(result.best_subset.ids()).c_str(),
                result.best_v);
    std::printf("search log -> %s\n", out_file(config, cli::kSearchLogFile).c_str());
    return 0;
  }
  if (command == "eval") {
    nlohmann::json report = cli::eval_subset_report(config, parse_subset(subset_text));
    std::cout << report.dump(2) << '\n';
    return 0;
  }
  if (command == "export-embeddings") {
    auto records = collect::load_records(out_file(config, cli::kRecordsFile));
    codec::CodecParams params = codec::load_checkpoint(out_file(config, cli::kCheckpointFile));
    cli::export_embeddings(config, records, params, copies);
    std::printf("embeddings -> %s\n", out_file(config, cli::kEmbeddingsFile).c_str());
    return 0;
  }
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"caps: feature selection via permutation-invariant subset embeddings "
               "and policy-guided search"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string subset_text;
  int copies = 20;

  CLI::App* run = app.add_subcommand("run", "full pipeline: collect, train, search, report");
  add_common(run, args);
  CLI::App* collect_cmd = app.add_subcommand("collect", "explore subsets and write records.jsonl");
  add_common(collect_cmd, args);
  CLI::App* train = app.add_subcommand("train", "train the subset codec from records.jsonl");
  add_common(train, args);
  CLI::App* search_cmd = app.add_subcommand("search", "policy search from a trained checkpoint");
  add_common(search_cmd, args);
  CLI::App* eval_cmd = app.add_subcommand("eval", "cross-validate one subset");
  add_common(eval_cmd, args);
  eval_cmd->add_option("--subset", subset_text, "comma-separated feature ids, e.g. 1,3,5")
      ->required();
  CLI::App* export_cmd =
      app.add_subcommand("export-embeddings", "write pooled embeddings of top subsets to CSV");
  add_common(export_cmd, args);
  export_cmd->add_option("--copies", copies, "permutations per subset (default 20)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    return dispatch(app.get_subcommands().front()->get_name(), args, subset_text, copies);
  } catch (const caps::ConfigError& e) {
    std::fprintf(stderr, "caps: %s\n", e.what());
    return 2;
  } catch (const caps::cli::StageError& e) {
    std::fprintf(stderr, "caps: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "caps: %s\n", e.what());
    return 1;
  }
}
