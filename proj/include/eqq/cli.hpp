#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace eqq::cli {

enum class Command { Grid, Quantize, Error, Sweep, Coeff, Report };

struct RunConfig {
  Command command = Command::Grid;

  std::string spec_path;   // measure spec JSON
  std::string grid_path;   // grid header JSON
  std::string cloud_path;  // point cloud CSV
  std::string sweep_path;  // sweep CSV (coeff)
  std::string output_path;  // main output; stdout when empty
  std::string result_path;  // quantize: result JSON
  std::string plan_path;    // error --mode capacity: plan CSV

  double p = 2.0;
  int d = 0;  // 0: taken from the spec or grid
  int n = 0;
  std::vector<int> n_list;
  std::vector<std::string> methods{"lloyd_capacity"};
  std::uint64_t seed = 0;
  int restarts = 1;
  int max_iters = 100;
  double tol = 1e-6;
  std::string init = "rho";
  int resolution = 0;  // cells along the longest axis; 0 picks automatically
  int min_cells_per_point = 64;
  std::size_t max_cells = 1u << 21;
  std::vector<double> omega;  // wb box: lo_1..lo_d, hi_1..hi_d
  std::string mode = "capacity";
  std::string cell_model = "atom";
  double theta = 8.0;
  bool polish = false;
  std::string region = "square";
  double hex_margin = 1.0;
  bool truncate_ok = false;
  bool record_runtime = false;
  std::optional<double> q_lower, q_upper;
  bool empirical = true;
};

std::string command_name(Command c);

// Every violated requirement, as human-readable messages.
std::vector<std::string> validate(const RunConfig& config);

// Parses argv (without running anything). Throws eqq::Error on bad flags.
RunConfig parse_args(int argc, const char* const* argv);

// Executes one command. Returns 0, 2 (validation) or 3 (solver failure);
// failures are reported on `err` as {"error": code, "detail": ...}.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

// parse_args followed by run.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace eqq::cli
