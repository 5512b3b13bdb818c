#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cssr/hmm.hpp"
#include "cssr/machine.hpp"
#include "cssr/reconstruction.hpp"
#include "cssr/sources.hpp"
#include "cssr/vlmm.hpp"

namespace cssr {

enum class Method { Cssr, CvEm, Vlmm };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Cssr: return "cssr";
    case Method::CvEm: return "cv-em";
    case Method::Vlmm: return "vlmm";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  if (name == "cssr") return Method::Cssr;
  if (name == "cv-em" || name == "cvem") return Method::CvEm;
  if (name == "vlmm") return Method::Vlmm;
  throw std::invalid_argument("unknown method '" + name + "'");
}

struct ExperimentConfig {
  std::string name = "experiment";
  std::string source = "even";  // builtin name or spec file path
  Method method = Method::Cssr;
  std::vector<std::size_t> n_values{10000};
  std::vector<int> history_values{4};
  double alpha = 1e-3;
  TestKind test = TestKind::KS;
  std::uint64_t min_count = 1;
  int trials = 30;
  std::uint64_t seed = 1;
  int eval_length = 10;
  // CV-EM settings
  std::size_t em_max_states = 10;
  int em_restarts = 5;
  int em_max_iters = 500;
  double em_tol = 1e-6;
  unsigned threads = 0;  // 0 = hardware concurrency
};

struct TrialResult {
  std::size_t n = 0;
  int max_history = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  std::size_t states = 0;
  double tv = 0;
  double seconds = 0;
  double seconds_parse = 0, seconds_sufficiency = 0, seconds_recursion = 0;
  std::size_t sync_failures = 0;
  bool failed = false;
  std::string error;
};

struct CellSummary {
  std::size_t n = 0;
  int max_history = 0;
  int trials = 0;
  int failures = 0;
  double mean_states = 0, sd_states = 0;
  double mean_tv = 0, sd_tv = 0;
  double mean_seconds = 0, min_seconds = 0;
  bool flagged = false;  // more than 10% of trials failed
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TrialResult> rows;       // cell-major, trial order within cell
  std::vector<CellSummary> cells;
};

/// splitmix64: the seed-derivation mix.  Per-trial seeds are
/// mix(mix(mix(master + 1 + cell) + 1 + trial) + stream), so adding cells or
/// trials never changes the seeds of existing ones.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t cell, std::uint64_t trial,
                                 std::uint64_t stream = 0) {
  return splitmix64(splitmix64(splitmix64(master + 1 + cell) + 1 + trial) + stream);
}

namespace detail {

inline void summarize(const ExperimentConfig& config, ExperimentResult& result) {
  const int trials = config.trials;
  std::size_t cell_count = config.n_values.size() * config.history_values.size();
  for (std::size_t c = 0; c < cell_count; ++c) {
    CellSummary cell;
    const TrialResult& first = result.rows[c * trials];
    cell.n = first.n;
    cell.max_history = first.max_history;
    cell.trials = trials;
    double sum_s = 0, sum_s2 = 0, sum_tv = 0, sum_tv2 = 0, sum_sec = 0;
    double min_sec = 0;
    int ok = 0;
    for (int t = 0; t < trials; ++t) {
      const TrialResult& row = result.rows[c * trials + t];
      if (row.failed) {
        ++cell.failures;
        continue;
      }
      ++ok;
      sum_s += static_cast<double>(row.states);
      sum_s2 += static_cast<double>(row.states) * static_cast<double>(row.states);
      sum_tv += row.tv;
      sum_tv2 += row.tv * row.tv;
      sum_sec += row.seconds;
      if (ok == 1 || row.seconds < min_sec) min_sec = row.seconds;
    }
    if (ok > 0) {
      cell.mean_states = sum_s / ok;
      cell.mean_tv = sum_tv / ok;
      cell.mean_seconds = sum_sec / ok;
      cell.min_seconds = min_sec;
      if (ok > 1) {
        cell.sd_states = std::sqrt(std::max(0.0, (sum_s2 - sum_s * sum_s / ok) / (ok - 1)));
        cell.sd_tv = std::sqrt(std::max(0.0, (sum_tv2 - sum_tv * sum_tv / ok) / (ok - 1)));
      }
    }
    cell.flagged = cell.failures * 10 > trials;
    result.cells.push_back(cell);
  }
}

}  // namespace detail

/// Runs the configured trial grid.  Every trial simulates fresh data from
/// the source with its own derived seed, fits the configured method, and
/// scores the fitted model against the source's exact word distribution at
/// eval_length.  Trials run in parallel; outputs are slot-addressed, so the
/// result is independent of scheduling.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.trials < 1) throw std::invalid_argument("experiment: trials must be >= 1");
  if (config.n_values.empty() || config.history_values.empty())
    throw std::invalid_argument("experiment: empty grid");
  const CausalStateMachine source = load_source(config.source);
  const std::map<Word, double> truth = source.word_distribution(config.eval_length);
  const Alphabet& alphabet = source.alphabet();

  struct Job {
    std::size_t cell;
    std::size_t n;
    int max_history;
    int trial;
  };
  std::vector<Job> jobs;
  std::size_t cell = 0;
  for (std::size_t n : config.n_values)
    for (int h : config.history_values) {
      for (int t = 0; t < config.trials; ++t) jobs.push_back({cell, n, h, t});
      ++cell;
    }

  ExperimentResult result;
  result.config = config;
  result.rows.resize(jobs.size());

  auto run_job = [&](const Job& job) {
    TrialResult row;
    row.n = job.n;
    row.max_history = job.max_history;
    row.trial = job.trial;
    row.seed = derive_seed(config.seed, job.cell, static_cast<std::uint64_t>(job.trial));
    try {
      using clock = std::chrono::steady_clock;
      if (config.method == Method::Cssr) {
        SymbolSequence data = source.simulate(job.n, row.seed);
        auto t0 = clock::now();
        CssrConfig cc{job.max_history, config.alpha, config.test, config.min_count};
        CssrResult fit = run_cssr(data, alphabet, cc);
        row.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        row.states = fit.machine.state_count();
        row.tv = tv_distance(truth, fit.machine.word_distribution(config.eval_length));
        row.seconds_parse = fit.diagnostics.seconds_parse;
        row.seconds_sufficiency = fit.diagnostics.seconds_sufficiency;
        row.seconds_recursion = fit.diagnostics.seconds_recursion;
        row.sync_failures = fit.diagnostics.vote_sync_failures;
      } else if (config.method == Method::Vlmm) {
        SymbolSequence data = source.simulate(job.n, row.seed);
        auto t0 = clock::now();
        ParseTree tree = ParseTree::build(data, alphabet.size(), job.max_history);
        ContextTree ctx = vlmm_learn(tree, job.max_history, config.alpha, config.test,
                                     config.min_count);
        row.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        row.states = ctx.context_count();
        row.tv = tv_distance(truth, vlmm_word_distribution(ctx, config.eval_length));
      } else {
        SymbolSequence train = source.simulate(job.n, row.seed);
        SymbolSequence test_data =
            source.simulate(job.n, derive_seed(config.seed, job.cell,
                                               static_cast<std::uint64_t>(job.trial), 1));
        auto t0 = clock::now();
        std::vector<std::size_t> sizes;
        for (std::size_t m = 1; m <= config.em_max_states; ++m) sizes.push_back(m);
        CrossValidationResult cv =
            cross_validate(train, test_data, alphabet.size(), sizes, config.em_restarts, row.seed,
                           config.em_max_iters, config.em_tol);
        row.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        row.states = cv.selected_states;
        row.tv = tv_distance(truth, hmm_word_distribution(cv.best_model, config.eval_length));
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    std::size_t slot = job.cell * static_cast<std::size_t>(config.trials) +
                       static_cast<std::size_t>(job.trial);
    result.rows[slot] = std::move(row);
  };

  unsigned threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  if (threads <= 1 || jobs.size() == 1) {
    for (const Job& j : jobs) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(threads, jobs.size()); ++w)
      pool.emplace_back([&] {
        while (true) {
          std::size_t i = next.fetch_add(1);
          if (i >= jobs.size()) return;
          run_job(jobs[i]);
        }
      });
    for (auto& t : pool) t.join();
  }

  detail::summarize(config, result);
  return result;
}

/// Fixed-column CSV of raw trial rows.
inline void write_csv(std::ostream& os, const ExperimentResult& result) {
  os << "method,source,N,L_max,alpha,trial,states,tv_dist,seconds,seed\n";
  for (const TrialResult& row : result.rows) {
    os << method_name(result.config.method) << ',' << result.config.source << ',' << row.n << ','
       << row.max_history << ',' << result.config.alpha << ',' << row.trial << ',';
    if (row.failed)
      os << ",,";
    else
      os << row.states << ',' << row.tv << ',';
    os << row.seconds << ',' << row.seed << '\n';
  }
}

/// Per-cell mean/stddev summary.
inline nlohmann::json summary_json(const ExperimentResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const CellSummary& c : result.cells) {
    cells.push_back({{"N", c.n},
                     {"L_max", c.max_history},
                     {"trials", c.trials},
                     {"failures", c.failures},
                     {"flagged", c.flagged},
                     {"mean_states", c.mean_states},
                     {"sd_states", c.sd_states},
                     {"mean_tv", c.mean_tv},
                     {"sd_tv", c.sd_tv},
                     {"mean_seconds", c.mean_seconds},
                     {"min_seconds", c.min_seconds}});
  }
  return nlohmann::json{{"name", result.config.name},
                        {"method", method_name(result.config.method)},
                        {"source", result.config.source},
                        {"alpha", result.config.alpha},
                        {"test", test_kind_name(result.config.test)},
                        {"trials", result.config.trials},
                        {"seed", result.config.seed},
                        {"eval_length", result.config.eval_length},
                        {"cells", cells}};
}

struct ScalingRow {
  std::size_t n = 0;
  int max_history = 0;
  double mean_tv = 0;
  double scaled = 0;  // mean_tv * sqrt(N)
  bool excluded = false;
  std::string reason;
};

/// Error-scaling table: TV error times sqrt(N) should be flat when the
/// inferred structure is right.  Cells where most trials missed the expected
/// state count sit off the scaling curve and are excluded.
inline std::vector<ScalingRow> scaling_report(const ExperimentResult& result,
                                              std::size_t expected_states) {
  std::vector<ScalingRow> out;
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const CellSummary& cell = result.cells[c];
    ScalingRow row;
    row.n = cell.n;
    row.max_history = cell.max_history;
    row.mean_tv = cell.mean_tv;
    row.scaled = cell.mean_tv * std::sqrt(static_cast<double>(cell.n));
    if (cell.failures == cell.trials) {
      row.excluded = true;
      row.reason = "all trials failed";
    } else {
      int right = 0, ok = 0;
      for (int t = 0; t < cell.trials; ++t) {
        const TrialResult& r = result.rows[c * cell.trials + t];
        if (r.failed) continue;
        ++ok;
        if (r.states == expected_states) ++right;
      }
      if (right * 2 < ok) {
        row.excluded = true;
        row.reason = "wrong state count in most trials";
      }
    }
    out.push_back(row);
  }
  return out;
}

struct RuntimeRow {
  std::size_t n = 0;
  int max_history = 0;
  double mean_seconds = 0;
  double min_seconds = 0;
  double per_symbol = 0;  // min_seconds / N
};

/// Per-symbol cost table for linear-time verification; uses the fastest
/// trial per cell to suppress scheduling noise.
inline std::vector<RuntimeRow> runtime_report(const ExperimentResult& result) {
  std::vector<RuntimeRow> out;
  for (const CellSummary& cell : result.cells) {
    if (cell.failures == cell.trials) continue;
    RuntimeRow row;
    row.n = cell.n;
    row.max_history = cell.max_history;
    row.mean_seconds = cell.mean_seconds;
    row.min_seconds = cell.min_seconds;
    row.per_symbol = cell.min_seconds / static_cast<double>(cell.n);
    out.push_back(row);
  }
  return out;
}

/// Experiment description as JSON (used by the CLI).
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.name = j.value("name", c.name);
  c.source = j.value("source", c.source);
  if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
  if (j.contains("N")) c.n_values = j.at("N").get<std::vector<std::size_t>>();
  if (j.contains("L_max")) c.history_values = j.at("L_max").get<std::vector<int>>();
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("test")) {
    std::string t = j.at("test").get<std::string>();
    if (t == "ks")
      c.test = TestKind::KS;
    else if (t == "chi2")
      c.test = TestKind::ChiSquared;
    else
      throw std::invalid_argument("unknown test kind '" + t + "'");
  }
  c.min_count = j.value("min_count", c.min_count);
  c.trials = j.value("trials", c.trials);
  c.seed = j.value("seed", c.seed);
  c.eval_length = j.value("eval_length", c.eval_length);
  c.em_max_states = j.value("em_max_states", c.em_max_states);
  c.em_restarts = j.value("em_restarts", c.em_restarts);
  c.em_max_iters = j.value("em_max_iters", c.em_max_iters);
  c.em_tol = j.value("em_tol", c.em_tol);
  c.threads = j.value("threads", c.threads);
  return c;
}

}  // namespace cssr
