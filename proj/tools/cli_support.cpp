#include "cli_support.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace villani::cli {

std::string ParamSet::key_of(const std::string& flag) {
  std::string k = flag;
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

void ParamSet::merge(const json& cfg, const std::string& command) {
  if (cfg.is_null()) return;
  require(cfg.is_object(), "config: top level must be a JSON object");
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    if (it.key() == "command") {
      require(it.value() == command, "config: written for command '" +
                                         it.value().dump() + "', not '" + command + "'");
      continue;
    }
    auto e = std::find_if(entries_.begin(), entries_.end(),
                          [&](const Entry& x) { return x.key == it.key(); });
    require(e != entries_.end(), "config: unknown key '" + it.key() + "' for " + command);
    if (e->opt->count() > 0) continue;
    try {
      e->set(it.value());
    } catch (const json::exception& ex) {
      throw UsageError("config: bad value for '" + it.key() + "': " + ex.what());
    }
    e->from_config = true;
  }
}

bool ParamSet::given(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.key == key) return e.from_config || e.opt->count() > 0;
  return false;
}

ojson ParamSet::resolved(const std::string& command) const {
  ojson j;
  j["command"] = command;
  for (const auto& e : entries_) j[e.key] = e.get();
  return j;
}

json load_config(const std::string& path) {
  if (path.empty()) return json();
  std::ifstream is(path);
  require(static_cast<bool>(is), "config: cannot open '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& ex) {
    throw UsageError("config: '" + path + "' is not valid JSON: " + ex.what());
  }
}

unsigned resolve_thread_flag(const Globals& g) {
  if (g.threads_opt && g.threads_opt->count() > 0) return g.threads;
  if (const char* env = std::getenv("VB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    require(end != env && *end == '\0' && v >= 0, "VB_THREADS must be a non-negative integer");
    return static_cast<unsigned>(v);
  }
  return 1;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot write '" + path + "'");
  os << content;
  require(static_cast<bool>(os), "write failed for '" + path + "'");
}

void write_sidecar(const std::string& path, const ojson& config) {
  write_file(path + ".config.json", config.dump(2) + "\n");
}

}  // namespace villani::cli
