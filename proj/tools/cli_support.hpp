#pragma once

#include "villani/types.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace villani::cli {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

enum ExitCode { kPass = 0, kCheckFailed = 1, kUsage = 2 };

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out;
  std::string config;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

/// Options of one command that take part in config files. A value comes
/// from the flag if given, else from the config file, else the default.
class ParamSet {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, T& var, const std::string& help) {
    CLI::Option* opt = app->add_option("--" + flag, var, help)->capture_default_str();
    bind(key_of(flag), opt, var);
    return opt;
  }

  template <class T>
  void bind(const std::string& key, CLI::Option* opt, T& var) {
    entries_.push_back({key, opt, [&var](const json& j) { var = j.get<T>(); },
                        [&var] { return ojson(var); }, false});
  }

  /// Applies config values for keys whose flag was not given. Unknown keys
  /// and a mismatched "command" entry are usage errors.
  void merge(const json& cfg, const std::string& command);

  /// True when the value came from a flag or from the config file.
  bool given(const std::string& key) const;

  ojson resolved(const std::string& command) const;

 private:
  struct Entry {
    std::string key;
    CLI::Option* opt;
    std::function<void(const json&)> set;
    std::function<ojson()> get;
    bool from_config;
  };
  static std::string key_of(const std::string& flag);
  std::vector<Entry> entries_;
};

json load_config(const std::string& path);

/// Resolves --threads, falling back to VB_THREADS, then 1.
unsigned resolve_thread_flag(const Globals& g);

void write_file(const std::string& path, const std::string& content);

/// Writes the resolved config next to a CSV or binary artifact.
void write_sidecar(const std::string& path, const ojson& config);

}  // namespace villani::cli
