#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfml/experiments.hpp"

namespace {

void print_error(const std::string& msg) {
  nlohmann::json err;
  err["error"] = msg;
  std::cerr << err.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collaborative-filtering margin laboratory"};
  app.require_subcommand(0);

  std::string experiment;
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds;
  bool smoke = false;
  bool list = false;

  app.add_option("experiment", experiment,
                 "experiment id (kernel-vs-model, margin-convergence, "
                 "transductive-training, exposure-sweep)");
  app.add_option("--config", config_path, "JSON config file (optional)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seeds", seeds, "replacement seed list")->delimiter(',');
  app.add_flag("--smoke", smoke, "shrink sizes for a fast end-to-end run");
  app.add_flag("--list", list, "print available experiment ids and exit");

  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& id : cfml::kExperimentIds) std::cout << id << "\n";
    return 0;
  }
  if (experiment.empty()) {
    print_error("missing experiment id; run with --list to see choices");
    return 1;
  }

  try {
    cfml::RunRequest req;
    req.experiment = experiment;
    req.out_dir = out_dir;
    req.smoke = smoke;
    req.seed_override = seeds;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open config file: " + config_path);
      in >> req.user_config;
    } else {
      req.user_config = nlohmann::json::object();
    }
    const auto files = cfml::run_experiment(req);
    for (const auto& f : files) std::cout << f << "\n";
    return 0;
  } catch (const std::exception& e) {
    print_error(e.what());
    return 1;
  }
}
