// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dftr::cli {

enum Exit : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kDivergence = 4,
  kConfigMismatch = 5,
  kEvalPairing = 6,
  kVerifyFailure = 7,
};

struct GenArgs {
  std::string out;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t size = 64;
  std::string shapes = "disk,rectangle,triangle,blob";
};

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string ablation;
  std::vector<std::string> overrides;
  std::string resume;
  bool quiet = false;
};

struct InferArgs {
  std::string ckpt;
  std::string in;
  std::string out;
  std::string config;  // default: config.resolved next to the checkpoint
  bool save_depth = false;
};

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string report;
};

int run_gen(const GenArgs& a, std::ostream& out, std::ostream& err);
int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err);
int run_infer(const InferArgs& a, std::ostream& out, std::ostream& err);
int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err);
int run_verify(const std::string& suite, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches; returns the process exit code.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace dftr::cli
