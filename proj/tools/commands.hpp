#pragma once

#include "cli_support.hpp"

#include <memory>
#include <string>

namespace villani::cli {

class Command {
 public:
  virtual ~Command() = default;
  virtual int run(const Globals& g) = 0;

  CLI::App* app = nullptr;
  ParamSet params;
  std::string name;  // as recorded in configs, e.g. "darcy-train"
};

std::unique_ptr<Command> make_check_grads(CLI::App& parent, Globals& g);
std::unique_ptr<Command> make_verify_bounds(CLI::App& parent, Globals& g);
std::unique_ptr<Command> make_probe_villani(CLI::App& parent, Globals& g);
std::unique_ptr<Command> make_train_sde(CLI::App& parent, Globals& g);
std::unique_ptr<Command> make_darcy_gen(CLI::App& parent, Globals& g);
std::unique_ptr<Command> make_darcy_train(CLI::App& parent, Globals& g);
std::unique_ptr<Command> make_darcy_eval(CLI::App& parent, Globals& g);

/// Writes a JSON document to --out, or to stdout when --out is empty.
void emit_json(const Globals& g, const ojson& doc);

}  // namespace villani::cli
