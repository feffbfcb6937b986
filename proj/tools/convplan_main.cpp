// convplan <command> --config <path> [--run-dir <path>]

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "convplan/annotation.hpp"
#include "convplan/error.hpp"
#include "convplan/pipeline.hpp"

namespace {

convplan::AnnotationServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intent-rewriting and plan-evaluation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir;
  std::string log_level = "info";
  std::size_t workers = 0;
  int port = 0;
  std::string data_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--run-dir", run_dir, "Run directory (overrides run_dir in the config)");
    cmd->add_option("--workers", workers, "Per-stage worker threads (overrides the config)");
  };
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::vector<std::pair<std::string, CLI::App*>> commands;
  for (const auto& name : convplan::stage_names()) {
    auto* cmd = app.add_subcommand(name, "Run the " + name + " stage");
    add_common(cmd);
    if (name == "serve") {
      cmd->add_option("--port", port, "Listen port (overrides the config)");
      cmd->add_option("--data-dir", data_dir, "Annotation data directory (overrides the config)");
    }
    commands.emplace_back(name, cmd);
  }
  auto* all = app.add_subcommand("all", "Run every stage except serve, in order");
  add_common(all);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("convplan"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    std::optional<std::filesystem::path> rd;
    if (!run_dir.empty()) rd = run_dir;
    auto config = convplan::load_run_config(config_path, rd);
    if (workers > 0) config.workers = workers;
    if (port > 0) config.port = port;
    if (!data_dir.empty()) config.annotation_dir = data_dir;

    if (all->parsed()) {
      for (const auto& o : convplan::run_all(config)) {
        std::cout << o.command << (o.cached ? " (cached)" : "") << '\n';
      }
      return 0;
    }
    for (const auto& [name, cmd] : commands) {
      if (!cmd->parsed()) continue;
      if (name == "serve") {
        auto store = convplan::prepare_annotation(config);
        convplan::AnnotationServer server(store, config.static_dir);
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        if (!server.listen(config.host, config.port)) {
          throw convplan::Error(convplan::ErrorCode::kIoError,
                             "cannot listen on " + config.host + ":" + std::to_string(config.port));
        }
        g_server = nullptr;
        return 0;
      }
      const auto o = convplan::run_stage(name, config);
      std::cout << o.command << (o.cached ? " (cached)" : "") << '\n';
      for (const auto& f : o.outputs) std::cout << "  " << f << '\n';
    }
    return 0;
  } catch (const convplan::Error& e) {
    spdlog::error("{}", e.what());
    return convplan::exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
