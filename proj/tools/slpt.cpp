// Command-line front end: one subcommand per run mode.
#include <CLI11.hpp>
#include <fmt/format.h>
#include <iostream>

#include "slpt/errors.hpp"
#include "slpt/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stationary-light transmission, continuation and stability runs"};
  app.set_version_flag("--version", slpt::tool_version());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string seed_from;

  for (const auto mode : {slpt::Mode::Params, slpt::Mode::Linear, slpt::Mode::Spectrum, slpt::Mode::ShiftStudy,
                          slpt::Mode::Stability}) {
    auto* sub = app.add_subcommand(slpt::to_string(mode));
    sub->add_option("--config", config_path, "configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
    if (mode == slpt::Mode::Spectrum || mode == slpt::Mode::Stability)
      sub->add_option("--seed-from", seed_from, "prior spectrum table for a warm start")->check(CLI::ExistingFile);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    slpt::RunRequest req;
    req.mode = slpt::mode_from_string(app.get_subcommands().front()->get_name());
    req.config_text = slpt::read_file(config_path);
    req.out_dir = out_dir;
    if (!seed_from.empty()) req.seed_from = seed_from;

    const auto cfg = slpt::parse_config(req.config_text);
    if (cfg.mode && *cfg.mode != req.mode)
      std::cerr << fmt::format("warning: config mode '{}' ignored, running '{}'\n", slpt::to_string(*cfg.mode),
                               slpt::to_string(req.mode));

    const auto result = slpt::run(cfg, req);
    for (const auto& m : result.messages) std::cerr << m << '\n';
    for (const auto& f : result.files) std::cout << f << '\n';
    return result.exit_status;
  } catch (const slpt::ParseError& e) {
    std::cerr << fmt::format("{}: {}\n", config_path, e.what());
  } catch (const slpt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 2;
}
