#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "milodo/capi.h"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> precision;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, CommonFlags& flags, bool config_required) {
  auto* opt = sub->add_option("--config", flags.config_path, "config file (JSON)");
  if (config_required) opt->required();
  sub->add_option("--seed", flags.seed, "override the config seed");
  sub->add_option("--threads", flags.threads, "worker threads");
  sub->add_option("--precision", flags.precision, "f64 or f32")
      ->check(CLI::IsMember({"f64", "f32"}));
  sub->add_option("--out", flags.out, "output directory override");
}

int run(int (*cmd)(const char*, char**), const CommonFlags& flags) {
  std::string config = "{}";
  if (!flags.config_path.empty()) {
    std::ifstream in(flags.config_path);
    if (!in) {
      std::fprintf(stderr, "cannot open config: %s\n", flags.config_path.c_str());
      return 2;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    config = ss.str();
  }

  const std::uint64_t* seed_ptr = flags.seed ? &*flags.seed : nullptr;
  const int* threads_ptr = flags.threads ? &*flags.threads : nullptr;
  char* merged = nullptr;
  if (milodo_apply_overrides(config.c_str(), seed_ptr, threads_ptr,
                             flags.precision ? flags.precision->c_str() : nullptr,
                             flags.out ? flags.out->c_str() : nullptr, &merged) != MILODO_OK) {
    std::fprintf(stderr, "%s\n", milodo_last_error());
    return 2;
  }

  char* report = nullptr;
  const int code = cmd(merged, &report);
  if (report != nullptr && report[0] != '\0') std::fputs(report, stdout);
  if (code != 0) std::fprintf(stderr, "error (%d): %s\n", code, milodo_last_error());
  milodo_string_free(report);
  milodo_string_free(merged);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"milodo: decentralized optimization lab"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, verify_flags;
  auto* gen = app.add_subcommand("gen-data", "generate a problem dataset");
  add_common(gen, gen_flags, true);
  auto* train = app.add_subcommand("train", "train the learned optimizer");
  add_common(train, train_flags, true);
  auto* eval = app.add_subcommand("eval", "evaluate methods and emit reports");
  add_common(eval, eval_flags, true);
  auto* verify = app.add_subcommand("verify", "run the built-in property suite");
  add_common(verify, verify_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (gen->parsed()) return run(milodo_cmd_gen_data, gen_flags);
  if (train->parsed()) return run(milodo_cmd_train, train_flags);
  if (eval->parsed()) return run(milodo_cmd_eval, eval_flags);
  return run(milodo_cmd_verify, verify_flags);
}
