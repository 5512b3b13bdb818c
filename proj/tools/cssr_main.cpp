// Command-line front end: inference, simulation, evaluation, experiment
// reproduction, and generator-spec validation.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cssr/cssr.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;      // malformed input, bad files
constexpr int kExitDegenerate = 2; // unusable alphabet

cssr::TestKind parse_test_kind(const std::string& name) {
  if (name == "ks") return cssr::TestKind::KS;
  if (name == "chi2") return cssr::TestKind::ChiSquared;
  throw CLI::ValidationError("--test", "expected 'ks' or 'chi2'");
}

std::optional<cssr::Alphabet> parse_alphabet_flag(const std::string& spec, bool token_mode) {
  if (spec.empty()) return std::nullopt;
  if (!token_mode) return cssr::Alphabet::from_chars(spec);
  std::vector<std::string> tokens;
  std::stringstream ss(spec);
  for (std::string t; std::getline(ss, t, ',');)
    if (!t.empty()) tokens.push_back(t);
  return cssr::Alphabet(tokens);
}

struct OutputTarget {
  std::ofstream file;
  std::ostream& stream(const std::string& path) {
    if (path.empty()) return std::cout;
    file.open(path);
    if (!file) throw std::runtime_error("cannot open output file: " + path);
    return file;
  }
};

int cmd_infer(const std::string& input, const std::string& alphabet_spec, bool token_mode,
              int max_history, double alpha, const std::string& test_name,
              std::uint64_t min_count, const std::string& output) {
  std::ifstream in(input);
  if (!in) {
    std::cerr << "error: cannot open input file: " << input << "\n";
    return kExitError;
  }
  cssr::IngestOptions opts;
  opts.token_mode = token_mode;
  opts.alphabet = parse_alphabet_flag(alphabet_spec, token_mode);
  cssr::IngestResult data;
  try {
    data = cssr::read_sequences(in, opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  if (data.alphabet.size() < 2) {
    std::cerr << "error: alphabet has " << data.alphabet.size()
              << " symbol(s); inference needs at least 2\n";
    return kExitDegenerate;
  }
  cssr::CssrConfig config{max_history, alpha, parse_test_kind(test_name), min_count};
  cssr::CssrResult result = cssr::run_cssr(data.sequences, data.alphabet, config);
  for (const std::string& w : result.diagnostics.warnings) std::cerr << "warning: " << w << "\n";
  std::cerr << "states: " << result.machine.state_count() << "\n"
            << "entropy rate (bits/symbol): " << result.machine.entropy_rate_bits() << "\n"
            << "longest suffix: " << result.machine.max_suffix_length() << "\n"
            << "data: " << data.total_symbols << " symbols in " << data.sequences.size()
            << " sequence(s)\n";
  OutputTarget target;
  result.machine.save(target.stream(output));
  return kExitOk;
}

int cmd_simulate(const std::string& spec, std::size_t n, std::uint64_t seed,
                 const std::string& output) {
  cssr::CausalStateMachine machine = cssr::load_source(spec);
  cssr::SymbolSequence seq = machine.simulate(n, seed);
  OutputTarget target;
  std::ostream& os = target.stream(output);
  const cssr::Alphabet& alphabet = machine.alphabet();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0 && !alphabet.single_char()) os << ' ';
    os << alphabet.token(seq[i]);
  }
  if (!seq.empty()) os << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& machine_path, const std::string& spec, int length) {
  std::ifstream in(machine_path);
  if (!in) {
    std::cerr << "error: cannot open machine file: " << machine_path << "\n";
    return kExitError;
  }
  cssr::CausalStateMachine machine = cssr::CausalStateMachine::load(in);
  cssr::CausalStateMachine truth = cssr::load_source(spec);
  if (!(machine.alphabet() == truth.alphabet())) {
    std::cerr << "error: machine and spec alphabets differ\n";
    return kExitDegenerate;
  }
  double tv = cssr::tv_distance(truth.word_distribution(length), machine.word_distribution(length));
  std::cout << tv << "\n";
  return kExitOk;
}

int cmd_experiment(const std::string& config_path, const std::string& csv_path,
                   const std::string& summary_path, unsigned threads) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot open config file: " << config_path << "\n";
    return kExitError;
  }
  nlohmann::json j = nlohmann::json::parse(in);
  cssr::ExperimentConfig config = cssr::config_from_json(j);
  if (threads) config.threads = threads;
  cssr::ExperimentResult result = cssr::run_experiment(config);
  OutputTarget target;
  cssr::write_csv(target.stream(csv_path), result);
  if (!summary_path.empty()) {
    std::ofstream sf(summary_path);
    if (!sf) throw std::runtime_error("cannot open summary file: " + summary_path);
    sf << cssr::summary_json(result).dump(2) << "\n";
  }
  int failures = 0;
  for (const auto& c : result.cells) failures += c.failures;
  if (failures) std::cerr << "warning: " << failures << " trial(s) failed\n";
  return kExitOk;
}

int cmd_spec_check(const std::string& spec) {
  cssr::ProcessSpec parsed = cssr::load_process_spec(spec);
  const cssr::CausalStateMachine& m = parsed.machine;
  std::cout << "alphabet:";
  for (std::size_t a = 0; a < m.alphabet().size(); ++a) std::cout << ' ' << m.alphabet().token(a);
  std::cout << "\nstates: " << m.state_count() << "\nstationary:";
  for (double p : m.stationary()) std::cout << ' ' << p;
  std::cout << "\nentropy rate (bits/symbol): " << m.entropy_rate_bits() << "\n";
  try {
    cssr::validate_suffix_defined(m);
    std::cout << "suffix-defined: yes\n";
  } catch (const std::exception& e) {
    std::cout << "suffix-defined: no (" << e.what() << ")\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal-state machine inference and evaluation for discrete sequences"};
  app.require_subcommand(1);

  // infer
  std::string in_path, alphabet_spec, test_name = "ks", out_path;
  bool token_mode = false;
  int max_history = 0;
  double alpha = 1e-3;
  std::uint64_t min_count = 1;
  auto* infer = app.add_subcommand("infer", "Reconstruct a causal-state machine from sequence data");
  infer->add_option("--input", in_path, "Input text file (one sequence per line)")->required();
  infer->add_option("--alphabet", alphabet_spec,
                    "Declared alphabet: character string, or comma-separated with --tokens "
                    "(default: inferred from data, sorted)");
  infer->add_flag("--tokens", token_mode, "Treat whitespace-separated tokens as symbols");
  infer->add_option("--lmax", max_history, "Maximum history length")->required();
  infer->add_option("--alpha", alpha, "Hypothesis test size (default 0.001)");
  infer->add_option("--test", test_name, "Test kind: ks or chi2 (default ks)");
  infer->add_option("--min-count", min_count, "Minimum occurrences before a suffix is tested");
  infer->add_option("--output", out_path, "Write the machine here instead of stdout");

  // simulate
  std::string sim_spec, sim_out;
  std::size_t sim_n = 0;
  std::uint64_t sim_seed = 1;
  auto* simulate = app.add_subcommand("simulate", "Generate data from a process spec");
  simulate->add_option("--spec", sim_spec, "Process spec file or builtin name (even, seven_state)")
      ->required();
  simulate->add_option("--n", sim_n, "Number of symbols")->required();
  simulate->add_option("--seed", sim_seed, "RNG seed (default 1)");
  simulate->add_option("--output", sim_out, "Write the sequence here instead of stdout");

  // eval
  std::string eval_machine, eval_spec;
  int eval_length = 10;
  auto* eval = app.add_subcommand("eval", "Total-variation error of a machine against a spec");
  eval->add_option("--machine", eval_machine, "Serialized machine file")->required();
  eval->add_option("--spec", eval_spec, "Ground-truth spec file or builtin name")->required();
  eval->add_option("--length", eval_length, "Word length for the comparison (default 10)");

  // experiment
  std::string exp_config, exp_csv, exp_summary;
  unsigned exp_threads = 0;
  auto* experiment = app.add_subcommand("experiment", "Run a trial grid from a JSON config");
  experiment->add_option("--config", exp_config, "Experiment config (JSON)")->required();
  experiment->add_option("--csv", exp_csv, "Write trial rows here instead of stdout");
  experiment->add_option("--summary", exp_summary, "Write per-cell JSON summary here");
  experiment->add_option("--threads", exp_threads, "Worker threads (default: hardware)");

  // spec-check
  std::string check_spec;
  auto* spec_check = app.add_subcommand("spec-check", "Validate a process spec file");
  spec_check->add_option("--spec", check_spec, "Process spec file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (infer->parsed())
      return cmd_infer(in_path, alphabet_spec, token_mode, max_history, alpha, test_name,
                       min_count, out_path);
    if (simulate->parsed()) return cmd_simulate(sim_spec, sim_n, sim_seed, sim_out);
    if (eval->parsed()) return cmd_eval(eval_machine, eval_spec, eval_length);
    if (experiment->parsed()) return cmd_experiment(exp_config, exp_csv, exp_summary, exp_threads);
    if (spec_check->parsed()) return cmd_spec_check(check_spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
