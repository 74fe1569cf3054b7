// Randomized search for avalanches with several waves; writes regression
// fixtures consumed by the wave tests.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sandpile/sampling.hpp"
#include "sandpile/waves.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Search for multi-wave sandpile avalanches"};
  std::uint64_t seed = 20061016;
  int count = 8;
  std::string out = "multiwave.json";
  app.add_option("--seed", seed);
  app.add_option("--count", count);
  app.add_option("--out", out);
  CLI11_PARSE(app, argc, argv);

  using namespace sandpile;
  nlohmann::json doc;
  doc["seed"] = seed;
  doc["instances"] = nlohmann::json::array();
  int found = 0;
  for (std::uint64_t i = 0; found < count; ++i) {
    Rng rng = make_stream(seed, i);
    const int side = 3 + static_cast<int>(i % 4);
    auto vol = make_box({side, side + static_cast<int>(i % 2)});
    Configuration eta = sample_recurrent(vol, rng);
    const Site origin = std::uniform_int_distribution<Site>(0, static_cast<Site>(vol->size()) - 1)(rng);
    eta[origin] = vol->degree();
    const auto wd = decompose_waves(eta, origin);
    // Half the fixtures must have three or more waves.
    if (wd.alpha < 2 || (found >= count / 2 && wd.alpha < 3)) continue;
    nlohmann::json inst;
    inst["sizes"] = {side, side + static_cast<int>(i % 2)};
    inst["origin"] = vol->point_copy(origin);
    inst["heights"] = std::vector<int>(eta.heights().begin(), eta.heights().end());
    inst["alpha"] = wd.alpha;
    inst["waves"] = wd.waves;
    inst["result"] = std::vector<int>(wd.report.result.heights().begin(), wd.report.result.heights().end());
    doc["instances"].push_back(inst);
    ++found;
  }
  std::ofstream(out) << doc.dump(1) << "\n";
  std::cout << "wrote " << found << " instances to " << out << "\n";
  return 0;
}
