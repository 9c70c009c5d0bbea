#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lhfi/covariates.hpp"
#include "lhfi/errors.hpp"
#include "lhfi/io.hpp"
#include "lhfi/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSampler = 3;
constexpr int kExitIo = 4;

int run_fit(const std::string& config_path, const std::string& preset, bool seed_given,
            std::uint64_t seed, const std::string& out_dir) {
  lhfi::RunConfig config = lhfi::load_run_config(config_path, preset);
  if (seed_given) config.sampler.seed = seed;
  if (!out_dir.empty()) config.output_dir = out_dir;
  lhfi::run(config);
  return kExitOk;
}

int run_simulate(const std::string& design_path, const std::string& out_dir) {
  lhfi::SynthDesign design = lhfi::load_design(design_path);
  lhfi::SynthData data = lhfi::generate(design);
  lhfi::write_dataset(data, design.spec, out_dir);
  return kExitOk;
}

int run_dd(const std::string& geometry_path, int west, int east) {
  std::vector<lhfi::SiteGeometry> geometry = lhfi::read_geometry(geometry_path);
  std::vector<double> dd = lhfi::compute_dd(geometry, west, east);
  std::printf("site,dd\n");
  for (std::size_t i = 0; i < geometry.size(); ++i) {
    std::printf("%d,%.10g\n", geometry[i].site_id, dd[i]);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent health factor index estimation for replicated benthic counts"};
  app.require_subcommand(1);

  std::string config_path, preset, fit_out;
  std::uint64_t seed = 0;
  CLI::App* fit = app.add_subcommand("fit", "Fit the hierarchical model and write result tables");
  fit->add_option("--config", config_path, "JSON run configuration")->required();
  fit->add_option("--preset", preset, "named model variant (model1..model5)");
  CLI::Option* seed_opt = fit->add_option("--seed", seed, "override the sampler seed");
  fit->add_option("--out", fit_out, "override the output directory");

  std::string design_path, sim_out;
  CLI::App* simulate =
      app.add_subcommand("simulate", "Generate a synthetic data set from a design file");
  simulate->add_option("--design", design_path, "JSON design description")->required();
  simulate->add_option("--out", sim_out, "output directory")->required();

  std::string geometry_path;
  int west = 0, east = 0;
  CLI::App* dd = app.add_subcommand("dd", "Print distance downstream for each site");
  dd->add_option("--geometry", geometry_path, "site,easting,northing CSV")->required();
  dd->add_option("--west", west, "west anchor site id")->required();
  dd->add_option("--east", east, "east anchor site id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (fit->parsed()) {
      return run_fit(config_path, preset, seed_opt->count() > 0, seed, fit_out);
    }
    if (simulate->parsed()) return run_simulate(design_path, sim_out);
    return run_dd(geometry_path, west, east);
  } catch (const lhfi::ValidationError& e) {
    std::cerr << "lhfi: " << e.what() << "\n";
    return kExitValidation;
  } catch (const lhfi::SamplerError& e) {
    std::cerr << "lhfi: " << e.what() << "\n";
    return kExitSampler;
  } catch (const lhfi::IoError& e) {
    std::cerr << "lhfi: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "lhfi: internal error: " << e.what() << "\n";
    return kExitIo;
  }
}
