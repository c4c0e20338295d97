// xaichat command line: serve the HTTP API, parse one utterance, run evaluations, check exports.

#include <CLI11.hpp>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "xaichat/config.hpp"
#include "xaichat/errors.hpp"
#include "xaichat/eval.hpp"
#include "xaichat/server.hpp"

#ifndef XAICHAT_SOURCE_DIR
#define XAICHAT_SOURCE_DIR "."
#endif

namespace {

using namespace xaichat;

ApiServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

std::string default_config_path() {
  if (auto env = process_env("XAICHAT_CONFIG")) return *env;
  return std::string(XAICHAT_SOURCE_DIR) + "/config/xaichat.conf";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const Dataset& pick_dataset(const Runtime& rt, const std::string& name) {
  const auto& key = name.empty() ? rt.config.active_dataset : name;
  auto it = rt.services->datasets.find(key);
  if (it == rt.services->datasets.end()) throw Error(ErrorCode::NotFound, "unknown dataset '" + key + "'");
  return *it->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conversational explanations for language model predictions"};
  app.require_subcommand(1);
  std::string config_path = default_config_path();
  app.add_option("--config", config_path, "Configuration file")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  std::string host;
  int port = 0;
  serve->add_option("--host", host, "Bind address (default from config)");
  serve->add_option("--port", port, "Port (default from config)")->check(CLI::Range(0, 65535));

  auto* parse = app.add_subcommand("parse", "Parse one utterance and print the query");
  std::string utterance;
  std::string parse_strategy;
  std::string parse_dataset;
  parse->add_option("--utterance,-u", utterance, "User utterance")->required();
  parse->add_option("--strategy,-s", parse_strategy, "gd, mp or nn (default from config)");
  parse->add_option("--dataset", parse_dataset, "Dataset whose size bounds ids");

  auto* eval = app.add_subcommand("eval", "Evaluation harness");
  eval->require_subcommand(1);
  auto* eval_parsing_cmd = eval->add_subcommand("parsing", "Exact-match parsing accuracy against a goldset");
  std::string goldset = std::string(XAICHAT_SOURCE_DIR) + "/fixtures/gold.jsonl";
  std::string eval_strategy = "mp";
  int max_new_tokens = 0;
  bool sweep = false;
  std::string format = "text";
  std::size_t jobs = 1;
  std::int64_t dataset_size = 0;
  eval_parsing_cmd->add_option("--goldset", goldset, "Goldset JSONL")->capture_default_str();
  eval_parsing_cmd->add_option("--strategy,-s", eval_strategy, "gd, mp or nn")->capture_default_str();
  auto* tokens_opt = eval_parsing_cmd->add_option("--max-new-tokens", max_new_tokens, "Generation budget")
                         ->check(CLI::PositiveNumber);
  eval_parsing_cmd->add_flag("--sweep", sweep, "Run every budget in {10, 20}")->excludes(tokens_opt);
  eval_parsing_cmd->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
  eval_parsing_cmd->add_option("--jobs,-j", jobs, "Parallel parses")->check(CLI::PositiveNumber);
  eval_parsing_cmd->add_option("--dataset-size", dataset_size, "Id bound for gold parses (default: active dataset)");

  auto* eval_augment_cmd = eval->add_subcommand("augment", "Augmentation consistency and fluency");
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string augment_dataset;
  eval_augment_cmd->add_option("--n", n, "Sample size")->required()->check(CLI::PositiveNumber);
  eval_augment_cmd->add_option("--seed", seed, "Sampling seed")->capture_default_str();
  eval_augment_cmd->add_option("--dataset", augment_dataset, "Dataset (default: active)");
  eval_augment_cmd->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

  auto* export_cmd = app.add_subcommand("export", "Normalize or replay an exported session");
  std::string session_file;
  bool replay = false;
  bool verify = false;
  export_cmd->add_option("--session-file", session_file, "Exported session JSON")->required();
  export_cmd->add_flag("--replay", replay, "Re-execute every turn instead of restoring");
  export_cmd->add_flag("--verify", verify, "With --replay: exit 1 unless the replay is byte-identical")
      ->needs("--replay");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    auto runtime = build_runtime(load_config(config_path));

    if (*serve) {
      const auto bind_host = host.empty() ? runtime.config.host : host;
      const int bind_port = *serve->get_option("--port") ? port : runtime.config.port;
      ApiServer server(std::move(runtime));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << bind_host << ":" << bind_port << "\n";
      if (!server.listen(bind_host, bind_port)) {
        std::cerr << "error: cannot bind " << bind_host << ":" << bind_port << "\n";
        return 1;
      }
      g_server = nullptr;
      return 0;
    }

    if (*parse) {
      const auto& ds = pick_dataset(runtime, parse_dataset);
      const auto strategy =
          parse_strategy.empty() ? runtime.config.parsing_strategy : strategy_from_string(parse_strategy);
      ParseContext ctx;
      ctx.dataset_size = ds.size();
      ctx.max_new_tokens = runtime.config.max_new_tokens;
      ctx.small_model = runtime.config.small_model;
      const auto result = runtime.services->parser->parse(strategy, utterance, *runtime.services->prompts, ctx);
      nlohmann::ordered_json j;
      j["utterance"] = utterance;
      j["parse"] = render_query(result.ast);
      j["strategy"] = to_string(result.strategy);
      j["main_operation"] = result.main_op ? nlohmann::ordered_json(*result.main_op) : nlohmann::ordered_json();
      j["repairs"] = nlohmann::ordered_json::array();
      for (auto r : result.repairs) j["repairs"].push_back(to_string(r));
      j["raw"] = result.raw;
      j["confidence"] = result.confidence ? nlohmann::ordered_json(*result.confidence) : nlohmann::ordered_json();
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*eval_parsing_cmd) {
      const auto size = dataset_size > 0 ? dataset_size : pick_dataset(runtime, "").size();
      const auto gold = build_goldset(goldset, size);
      for (const auto& w : gold.warnings) std::cerr << "warning: " << w << "\n";
      EvalOptions opts;
      opts.dataset_size = size;
      opts.small_model = runtime.config.small_model;
      opts.parallelism = jobs;
      const auto strategy = strategy_from_string(eval_strategy);
      std::vector<EvalReport> reports;
      if (sweep) {
        reports = eval_parsing_sweep(gold, strategy, *runtime.services->parser, *runtime.services->prompts, opts,
                                     runtime.generator->backend_id());
      } else {
        opts.max_new_tokens = max_new_tokens > 0 ? max_new_tokens : runtime.config.max_new_tokens;
        reports.push_back(eval_parsing(gold, strategy, *runtime.services->parser, *runtime.services->prompts, opts,
                                       runtime.generator->backend_id()));
      }
      std::cout << render_report(reports, format);
      return 0;
    }

    if (*eval_augment_cmd) {
      const auto& key = augment_dataset.empty() ? runtime.config.active_dataset : augment_dataset;
      auto it = runtime.services->datasets.find(key);
      if (it == runtime.services->datasets.end()) throw Error(ErrorCode::NotFound, "unknown dataset '" + key + "'");
      const auto report = eval_augmentation(it->second, *runtime.services->executor, *runtime.services->prompts,
                                            *runtime.similarity, n, seed);
      std::cout << render_report(report, format);
      return 0;
    }

    if (*export_cmd) {
      const auto text = read_file(session_file);
      auto doc = nlohmann::json::parse(text, nullptr, false);
      if (doc.is_discarded()) throw SchemaError(0, "session file is not JSON");
      auto session = replay ? Session::replay(doc, runtime.services) : Session::restore(doc, runtime.services);
      const auto out = session->export_text();
      std::cout << out;
      if (verify && out != text) {
        std::cerr << "replay differs from " << session_file << "\n";
        return 1;
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
