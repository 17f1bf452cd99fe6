// Self-contained oracle suite backing the `verify` subcommand: closed-form
// and brute-force checks that are independent of the implementation paths
// they validate.
#pragma once

#include <string>
#include <vector>

namespace csipred {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  // Test hook: perturbs one analytic gradient before comparison; the gradient
  // check must then fail (negative control).
  bool inject_gradient_bug = false;
  // Optional CQI table file to validate instead of the built-in default.
  std::string cqi_table_path;
};

std::vector<CheckResult> run_verification(const VerifyOptions& options = {});

// Prints one line per check ("[PASS]/[FAIL] name: detail"); returns the
// number of failures.
int report_verification(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace csipred
