#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "dlab/error.hpp"
#include "dlab/harness.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string output;
  std::string train_path;
  std::string val_path;
  long long jobs = -1;
  long long seed = -1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "experiment config file");
  cmd->add_option("--output", flags.output, "run output directory");
  cmd->add_option("--jobs", flags.jobs, "worker threads");
  cmd->add_option("--seed", flags.seed, "base seed override");
}

dlab::ExperimentConfig resolve(const CommonFlags& flags) {
  dlab::ExperimentConfig cfg = flags.config_path.empty()
                                   ? dlab::default_config()
                                   : dlab::parse_config_file(flags.config_path);
  if (!flags.output.empty()) {
    cfg.output_dir = flags.output;
  }
  if (flags.jobs >= 0) {
    cfg.jobs = static_cast<std::size_t>(flags.jobs);
  }
  if (flags.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(flags.seed);
    if (!cfg.data_seed_explicit) {
      cfg.data.seed = cfg.seed;
    }
  }
  if (!flags.train_path.empty()) {
    cfg.train_path = flags.train_path;
  }
  if (!flags.val_path.empty()) {
    cfg.val_path = flags.val_path;
  }
  dlab::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"label smoothing / distillation laboratory"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  CLI::App* gen = app.add_subcommand(
      "gen-data", "synthesize (or import) the train/val datasets");
  add_common(gen, gen_flags);
  gen->add_option("--train-path", gen_flags.train_path,
                  "existing train dataset to import");
  gen->add_option("--val-path", gen_flags.val_path,
                  "existing val dataset to import");

  CommonFlags teach_flags;
  CLI::App* teach = app.add_subcommand(
      "train-teacher", "train one teacher per smoothing level");
  add_common(teach, teach_flags);

  CommonFlags distill_flags;
  CLI::App* distill = app.add_subcommand(
      "distill", "train one student per (alpha, T) grid cell");
  add_common(distill, distill_flags);

  CommonFlags analyze_flags;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "compute geometry, smoothness, and accuracy tables");
  add_common(analyze, analyze_flags);

  CommonFlags report_flags;
  CLI::App* report = app.add_subcommand(
      "report", "render a text report from the stored tables");
  add_common(report, report_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    int failures = 0;
    if (gen->parsed()) {
      failures = dlab::cmd_gen_data(resolve(gen_flags));
    } else if (teach->parsed()) {
      failures = dlab::cmd_train_teacher(resolve(teach_flags));
    } else if (distill->parsed()) {
      failures = dlab::cmd_distill(resolve(distill_flags));
    } else if (analyze->parsed()) {
      failures = dlab::cmd_analyze(resolve(analyze_flags));
    } else if (report->parsed()) {
      failures = dlab::cmd_report(resolve(report_flags));
    }
    if (failures != 0) {
      std::fprintf(stderr, "dlab: %d unit(s) failed\n", failures);
      return 1;
    }
    return 0;
  } catch (const dlab::ConfigError& e) {
    std::fprintf(stderr, "dlab: config error: %s\n", e.what());
    return 2;
  } catch (const dlab::Error& e) {
    std::fprintf(stderr, "dlab: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dlab: %s\n", e.what());
    return 1;
  }
}
