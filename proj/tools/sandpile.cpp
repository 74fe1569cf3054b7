// Command-line experiment runner.
//
//   sandpile det-identity --d 2 --box 2x2
//   sandpile avalanche-stats --d 3 --box 16 --samples 100000 --seed 7 --out aval.csv
//
// Exit status: 0 when every pass/fail row passes, 1 when some row fails,
// 2 on usage or runtime errors.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sandpile/experiments.hpp"

namespace h = sandpile::harness;

int main(int argc, char** argv) {
  CLI::App app{"Abelian sandpile experiments"};
  app.set_version_flag("--version", std::string(h::kVersion));

  h::ExperimentSpec spec;
  std::string box_text, origin_text, nested_text, config_path;
  bool list = false;

  app.add_option("experiment", spec.experiment, "Experiment to run (see --list)");
  app.add_option("--d", spec.d, "Lattice dimension")->capture_default_str();
  app.add_option("--box", box_text, "Box side lengths, e.g. 2x2 or 16 (default 2 on every axis)");
  app.add_option("--origin", origin_text, "Origin as comma-separated coordinates (default: box centre)");
  app.add_option("--samples", spec.samples, "Monte Carlo sample count")->capture_default_str();
  app.add_option("--seed", spec.seed, "Master seed")->capture_default_str();
  app.add_option("--replicas", spec.replicas, "Number of replicas run concurrently")->capture_default_str();
  app.add_option("--out", spec.out, "Output file (default: stdout)");
  app.add_option("--format", spec.format, "csv or json")->capture_default_str();
  app.add_option("--nested", nested_text, "Comma-separated side lengths for nested-box experiments");
  app.add_option("--method", spec.method, "auto, exact or mc (dhar-check)")->capture_default_str();
  app.add_option("--config", config_path, "key = value file whose entries override the flags");
  app.add_flag("--list", list, "List experiments and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (list) {
    for (const auto& [name, fn] : h::experiments()) std::cout << name << '\n';
    return 0;
  }

  try {
    if (!origin_text.empty()) spec.origin = h::parse_int_list(origin_text);
    if (!nested_text.empty()) spec.nested = h::parse_int_list(nested_text);
    if (!config_path.empty()) h::apply_config(spec, h::read_config_file(config_path), &box_text);
    spec.box = box_text.empty() ? std::vector<int>(std::max(spec.d, 1), 2) : h::parse_box(box_text, spec.d);

    if (!spec.out.empty() && !std::ofstream(spec.out, std::ios::app)) throw std::runtime_error("cannot open output file: " + spec.out);

    const h::ExperimentReport rep = h::run_experiment(spec);
    if (spec.out.empty())
      std::cout << h::render(rep);
    else
      h::write_report(rep, spec.out);
    return rep.all_pass() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
