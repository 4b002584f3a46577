#include "commands.hpp"

#include <iostream>

using namespace villani;
using namespace villani::cli;

namespace villani::cli {

void emit_json(const Globals& g, const ojson& doc) {
  const std::string text = doc.dump(2) + "\n";
  if (g.out.empty())
    std::cout << text;
  else
    write_file(g.out, text);
}

}  // namespace villani::cli

int main(int argc, char** argv) {
  CLI::App app{"Villani-condition verification, SDE training and the Darcy attention benchmark"};
  app.require_subcommand(1);
  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  g.threads_opt = app.add_option("--threads", g.threads, "worker threads (0: all cores; env VB_THREADS)");
  g.out_opt = app.add_option("--out", g.out, "output path");
  app.add_option("--config", g.config, "JSON config; flags override its values");
  app.fallthrough();

  std::vector<std::unique_ptr<Command>> commands;
  commands.push_back(make_check_grads(app, g));
  commands.push_back(make_verify_bounds(app, g));
  commands.push_back(make_probe_villani(app, g));
  commands.push_back(make_train_sde(app, g));
  CLI::App* darcy = app.add_subcommand("darcy", "Darcy flow benchmark");
  darcy->require_subcommand(1);
  darcy->fallthrough();
  commands.push_back(make_darcy_gen(*darcy, g));
  commands.push_back(make_darcy_train(*darcy, g));
  commands.push_back(make_darcy_eval(*darcy, g));
  for (auto& c : commands) c->app->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  for (auto& c : commands) {
    if (!c->app->parsed()) continue;
    try {
      c->params.merge(load_config(g.config), c->name);
      return c->run(g);
    } catch (const UsageError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kUsage;
    } catch (const std::exception& e) {
      std::cerr << "failed: " << e.what() << "\n";
      return kCheckFailed;
    }
  }
  return kUsage;
}
