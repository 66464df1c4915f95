#include "cli.hpp"

#include "CLI11.hpp"

#include <iostream>

using nlohmann::json;

namespace {

// Flag values are read as JSON when they parse ("1e-4", "[64,64]", "true"),
// otherwise as plain strings ("knn", "out/run1").
json flag_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isoimm: isometric immersion learning on point clouds"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    std::string config;
    std::map<std::string, std::string> flags;
  };
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen", "write a synthetic point cloud"},
      {"train", "train encoder, decoder and soft dual; write checkpoints, logs and the metric field"},
      {"embed", "encode a dataset with trained checkpoints"},
      {"eval", "score trained checkpoints against a PCA baseline"},
      {"ablate-dual", "train at several dual weights gamma and tabulate the final isometric loss"},
  };
  std::vector<Sub> subs(commands.size());
  for (std::size_t i = 0; i < commands.size(); ++i) {
    Sub& s = subs[i];
    s.app = app.add_subcommand(commands[i].first, commands[i].second);
    s.app->add_option("-c,--config", s.config, "JSON config file (or a manifest.json from an earlier run)");
    for (const auto& key : isoimm::cli::config_keys()) {
      s.app->add_option("--" + key, s.flags[key], "overrides config key '" + key + "'");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return isoimm::cli::kExitValidation;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    const Sub& s = subs[i];
    if (!s.app->parsed()) continue;
    isoimm::cli::Overrides overrides;
    for (const auto& [key, value] : s.flags) {
      if (s.app->count("--" + key) > 0) overrides[key] = flag_value(value);
    }
    isoimm::cli::RunConfig cfg;
    try {
      cfg = isoimm::cli::parse_config(commands[i].first, s.config, overrides);
    } catch (const isoimm::cli::ConfigError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return isoimm::cli::kExitValidation;
    }
    return isoimm::cli::run_command(cfg, std::cout, std::cerr);
  }
  return isoimm::cli::kExitValidation;
}
