#pragma once

// Batch runner behind the zrplab binary.
//
//   zrplab run --config PATH [--seed U64] [--replicas N] [--workers N]
//              [--out DIR] [--format csv|json]
//   zrplab list [--json]
//
// Exit codes: 0 success, 2 invalid configuration or usage, 3 runtime failure
// (including an interrupted run, after its partial results are written).

#include <iosfwd>
#include <json.hpp>
#include <string>
#include <vector>

namespace zrp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

// Names of every runnable experiment kind, in listing order.
std::vector<std::string> experiment_kinds();

// Parameter schema of every kind: {"kinds": [{"kind", "description",
// "parameters": {name: {"type", "default"}}}]}.
nlohmann::json experiment_schema();

int main(int argc, char** argv, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

}  // namespace zrp::cli
