#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "cqsd/config.hpp"
#include "cqsd/csv.hpp"
#include "cqsd/runner.hpp"

namespace {

using namespace cqsd;

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig load_config(const std::string& path) {
  try {
    return parse_config(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// Writes through a temporary so a failed run never leaves a partial file.
template <class Body>
void write_output(const std::string& path, Body&& body) {
  if (path == "-") {
    body(std::cout);
    std::cout.flush();
    return;
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    body(os);
    if (!os) throw Error("write failed for " + path);
  }
  std::filesystem::rename(tmp, path);
}

int cmd_run(const std::string& config_path, const std::string& out) {
  const RunConfig c = load_config(config_path);
  const SimulationResult r = run_method(c, warn);
  write_output(out.empty() ? c.output_path : out, [&](std::ostream& os) { write_result_csv(os, r); });
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out) {
  const RunConfig c = load_config(config_path);
  if (!c.sweep) throw Error(config_path + ": no sweep.parameter / sweep.values block");
  const std::string path = out.empty() ? c.output_path : out;
  std::ostringstream body, failures;
  std::size_t n_failed = 0;
  for (double v : c.sweep->values) {
    ParameterSet p = c.params;
    apply_sweep_value(p, c.sweep->parameter, v);
    try {
      const SimulationResult r = run_method(c, p, warn);
      write_sweep_rows(body, v, r);
    } catch (const std::exception& e) {
      ++n_failed;
      failures << c.sweep->parameter << '=' << detail::fmt_double(v) << ": " << e.what() << '\n';
      std::cerr << "sweep point " << c.sweep->parameter << '=' << v << " failed: " << e.what() << '\n';
    }
  }
  write_output(path, [&](std::ostream& os) {
    Provenance prov;
    prov.method = std::string(to_string(c.method));
    prov.parameter_hash = parameter_hash(c.params);
    prov.seed = c.params.seed;
    prov.n_traj = c.params.n_traj;
    prov.eom_variant = std::string(to_string(c.params.eom_variant));
    write_provenance(os, prov);
    os << "# sweep=" << c.sweep->parameter << '\n';
    const auto cols = sweep_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k];
    os << '\n' << body.str();
  });
  if (n_failed > 0) {
    const std::string log = (path == "-" ? std::string("sweep") : path) + ".failed.log";
    std::ofstream(log) << failures.str();
    std::cerr << n_failed << " sweep point(s) failed; see " << log << '\n';
    return 1;
  }
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b, double threshold) {
  std::ifstream fa(a), fb(b);
  if (!fa) throw Error("cannot open " + a);
  if (!fb) throw Error("cannot open " + b);
  const CompareReport rep = compare_results(read_result_csv(fa), read_result_csv(fb));
  std::printf("max_trace_distance=%.6e\nmean_trace_distance=%.6e\nmax_concurrence_diff=%.6e\nworst_time=%g\n",
              rep.max_trace_distance, rep.mean_trace_distance, rep.max_concurrence_diff, rep.worst_time);
  const bool pass = rep.max_trace_distance <= threshold;
  std::printf("%s (threshold %g)\n", pass ? "PASS" : "FAIL", threshold);
  return pass ? 0 : 1;
}

int cmd_noise_check(const std::string& config_path, std::size_t n_paths, const std::string& out) {
  const RunConfig c = load_config(config_path);
  const TimeGrid grid = TimeGrid::from(c.params);
  const NoiseReport rep = validate_noise(ensemble_noise(c.params, grid, n_paths), c.params, grid);
  write_output(out.empty() ? "-" : out, [&](std::ostream& os) {
    os << "# n_paths=" << rep.n_paths << '\n' << "statistic,max_deviation,scale,threshold,flagged\n";
    for (const auto& s : rep.stats) {
      os << s.name << ',' << detail::fmt_double(s.max_deviation) << ',' << detail::fmt_double(s.scale) << ','
         << detail::fmt_double(s.threshold) << ',' << (s.flagged ? 1 : 0) << '\n';
    }
  });
  return rep.any_flagged() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two qubits in a leaky cavity: QSD ensembles and exact references"};
  app.require_subcommand(1);

  std::string config, out, file_a, file_b;
  double threshold = 0.03;
  std::size_t n_paths = 10000;

  auto* run = app.add_subcommand("run", "Simulate and write a RESULT CSV");
  run->add_option("config", config, "Config file")->required();
  run->add_option("-o,--out", out, "Output path ('-' for stdout); overrides output.path");

  auto* sweep = app.add_subcommand("sweep", "Run every sweep value and write a long-format CSV");
  sweep->add_option("config", config, "Config file")->required();
  sweep->add_option("-o,--out", out, "Output path; overrides output.path");

  auto* cmp = app.add_subcommand("compare", "Trace-distance comparison of two RESULT CSVs");
  cmp->add_option("a", file_a, "First CSV")->required();
  cmp->add_option("b", file_b, "Second CSV")->required();
  cmp->add_option("--threshold", threshold, "Pass threshold on the max trace distance")->capture_default_str();

  auto* noise = app.add_subcommand("noise-check", "Moment check of the sampled noises");
  noise->add_option("config", config, "Config file")->required();
  noise->add_option("--paths", n_paths, "Number of noise paths")->capture_default_str()->check(CLI::Range(100, 100000000));
  noise->add_option("-o,--out", out, "Report path (default stdout)");

  auto* dump = app.add_subcommand("dump-config", "Print the canonical form of a config");
  dump->add_option("config", config, "Config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, out);
    if (*sweep) return cmd_sweep(config, out);
    if (*cmp) return cmd_compare(file_a, file_b, threshold);
    if (*noise) return cmd_noise_check(config, n_paths, out);
    if (*dump) {
      std::cout << dump_config(load_config(config));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
