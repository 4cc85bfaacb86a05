#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqlab/model.hpp"

namespace seqlab {

// Everything a run needs, merged from defaults, a `key=value` config file,
// and command-line flags (flags win). Every key in either source must be
// recognized or the run aborts before any work.
struct RunConfig {
  std::string command;  // train | eval | decode | bench | gradcheck

  // paths; relative ones resolve against data_dir when it is set
  std::string train_path;
  std::string dev_path;
  std::string test_path;  // also the eval/decode input
  std::string embeddings_path;
  std::string predictions_path;  // eval from a predictions file instead of a model
  std::string model_path;        // checkpoint to write (train) or read (eval/decode/bench)
  std::string output_path;       // decode output / machine-readable report
  std::string data_dir;          // default from $SEQLAB_DATA_DIR

  // column layout of the CoNLL files
  int token_column = 0;
  int label_column = -1;  // -1: last column

  // scheme the data files are written in; model.tag_scheme is what we train in
  TagScheme data_scheme = TagScheme::bio;

  ModelConfig model;

  std::vector<std::uint64_t> seeds = {42};
  // false replaces `seeds` with random draws (exploratory runs)
  bool deterministic = true;

  std::int64_t bench_sentences = 10000;
  std::int64_t bench_length = 25;
  int bench_repetitions = 5;
  double gradcheck_tolerance = 1e-4;
};

// Applies `key=value` lines from a file ('#' starts a comment). Unknown keys
// abort with near-miss suggestions; malformed values carry file:line context.
void parse_config_file(const std::string& path, RunConfig& config);

// One recognized setting applied to `config`; `context` prefixes errors
// (e.g. "config.txt:7" or "flag --word-rep").
void apply_config_key(RunConfig& config, const std::string& key, const std::string& value,
                      const std::string& context);

// Full command line (without argv[0]): positional command, optional
// `--config FILE` (applied first), then `--kebab-case` flags mirroring every
// config key, as `--key value` or `--key=value`. Validates the merged result.
RunConfig parse_cli(const std::vector<std::string>& args);

// Merged-config validation: model ranges plus per-command required paths.
void validate_run_config(const RunConfig& config);

// Flag/key reference for --help.
std::string help_text();

}  // namespace seqlab
