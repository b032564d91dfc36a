#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sqr_app/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stock-conditioned joint price and yield quantile models"};
  app.set_version_flag("--version", std::string(SQR_VERSION));
  app.require_subcommand(1, 1);

  sqr::app::Invocation inv;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::string out;
  for (const auto& name : sqr::app::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", inv.config, "key = value configuration file")->required();
    sub->add_option("--seed", seed, "overrides the configured seed");
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sqr::app::exit_usage;
  }
  auto* chosen = app.get_subcommands().front();
  inv.command = chosen->get_name();
  if (chosen->count("--seed")) inv.seed = seed;
  if (chosen->count("--workers")) inv.workers = workers;
  if (chosen->count("--out")) inv.out = out;
  return sqr::app::run(inv, std::cerr);
}
