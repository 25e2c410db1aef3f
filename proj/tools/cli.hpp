#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "matchfree/config.hpp"
#include "matchfree/toy.hpp"

namespace matchfree::cli {

enum ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kAssertion = 2,
  kIo = 3,
};

// Entry point shared by the executable and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct RunResult {
  EvalMetrics metrics;
  std::vector<StepLog> logs;
};

// Trains one toy run from scratch and evaluates it on the held-out set.
RunResult train_and_evaluate(const Config& cfg, Objective objective);

enum class AblationParam { kAlpha, kRho, kNorm };

AblationParam parse_ablation_param(const std::string& s);
const char* ablation_param_name(AblationParam p);
std::vector<std::string> default_sweep(AblationParam p);
// Returns cfg with the swept value applied.
Config apply_setting(const Config& cfg, AblationParam p, const std::string& value);

struct AblationRow {
  std::string param;
  std::string value;
  std::uint64_t seed = 0;
  EvalMetrics metrics;
  double final_loss = 0.0;
};

std::vector<AblationRow> run_ablation(const Config& cfg, AblationParam p, const std::vector<std::string>& values,
                                      const std::vector<std::uint64_t>& seeds);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace matchfree::cli
