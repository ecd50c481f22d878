#ifndef POINTSENTINEL_CLI_HPP
#define POINTSENTINEL_CLI_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pointsentinel/train.hpp"

namespace ps::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitDivergence = 3;

struct GlobalOpts {
  std::optional<std::uint64_t> seed;       // overrides config/spec seeds
  bool overwrite = false;
  std::optional<std::string> output_dir;   // overrides spec output_dir
  bool quiet = false;
};

// Experiment spec (UTF-8 JSON with a required "version": 1).
struct ExperimentSpec {
  std::string name;
  std::string train_dataset;               // records csv
  std::string test_dataset;
  std::optional<std::string> presence_dataset;
  std::vector<nn::HeadVariant> heads;
  std::vector<std::uint64_t> seeds;
  double delta_max_relative = 0.15;
  double delta_max_mm = 50.0;
  int n_bootstrap = 1000;
  double alpha = 0.05;
  int n_thresholds = 151;
  std::uint64_t bootstrap_seed = 17;
  std::vector<std::pair<nn::HeadVariant, nn::HeadVariant>> delong_pairs;
  train::TrainConfig train;                // head/seed filled per run
  std::string output_dir;
};

ExperimentSpec load_experiment_spec(const std::string& path);

// Subcommand bodies; throw ps errors which run_command maps to exit codes.
void cmd_generate(const std::string& config_path, const std::string& out_dir,
                  const GlobalOpts& opts);
void cmd_train(const std::string& spec_path, const GlobalOpts& opts, bool resume);
void cmd_evaluate(const std::string& spec_path, const GlobalOpts& opts);
void cmd_compare(const std::string& run_a_dir, const std::string& run_b_dir,
                 const GlobalOpts& opts);

// Runs fn, translating errors into exit codes and messages on stderr.
int run_command(const GlobalOpts& opts, const std::function<void()>& fn);

// Checkpoint/log naming shared by train and evaluate.
std::string checkpoint_path(const std::string& out_dir, nn::HeadVariant head, std::uint64_t seed);
std::string train_log_path(const std::string& out_dir, nn::HeadVariant head, std::uint64_t seed);

}  // namespace ps::cli

#endif  // POINTSENTINEL_CLI_HPP
